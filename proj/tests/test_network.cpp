#include <doctest.h>

#include <cmath>

#include "churn/errors.hpp"
#include "churn/network.hpp"
#include "test_support.hpp"

using namespace churn;
using namespace churn::network;

namespace {

Architecture arch_4layer(std::size_t input = 100) {
    Architecture a;
    a.layer_sizes = {input, 64, 32, 2};
    return a;
}

} // namespace

TEST_CASE("init_network: deterministic, zero softmax, bounded hidden weights") {
    const Architecture arch = arch_4layer();
    const Network a = init_network(arch, 9);
    const Network b = init_network(arch, 9);
    REQUIRE(a.layers.size() == 3);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        CHECK(a.layers[l].weights == b.layers[l].weights);
        CHECK(a.layers[l].bias == b.layers[l].bias);
    }

    const LayerParams& softmax_layer = a.layers.back();
    for (std::size_t i = 0; i < softmax_layer.weights.size(); ++i)
        CHECK(softmax_layer.weights.data()[i] == 0.0);
    for (double v : softmax_layer.bias) CHECK(v == 0.0);

    Architecture wide;
    wide.layer_sizes = {100, 80, 2};
    const Network w = init_network(wide, 3);
    const Matrix& h = w.layers[0].weights;
    const double r = std::sqrt(6.0 / (100.0 + 80.0));
    double mean = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        CHECK(h.data()[i] > -r);
        CHECK(h.data()[i] < r);
        mean += h.data()[i];
    }
    mean /= static_cast<double>(h.size());
    const double sigma_mean = r / std::sqrt(3.0 * static_cast<double>(h.size()));
    CHECK(std::abs(mean) < 3.0 * sigma_mean);
    for (double b_v : w.layers[0].bias) CHECK(b_v == 0.0);
}

TEST_CASE("architecture validation") {
    Architecture no_hidden;
    no_hidden.layer_sizes = {10, 2};
    CHECK_THROWS_AS(no_hidden.validate(), DataError);

    Architecture bad_output;
    bad_output.layer_sizes = {10, 5, 3};
    CHECK_THROWS_AS(bad_output.validate(), DataError);

    Architecture bad_keep = arch_4layer();
    bad_keep.dropout_keep_p = 0.0;
    CHECK_THROWS_AS(bad_keep.validate(), DataError);
}

TEST_CASE("activations and their derivatives") {
    CHECK(activate(0.0, Activation::logistic) == 0.5);
    CHECK(activate(0.0, Activation::tanh) == 0.0);
    CHECK(activate(-3.0, Activation::relu) == 0.0);
    CHECK(activate(2.0, Activation::relu) == 2.0);

    // bounded ranges; tanh saturates to exactly +-1.0 in double precision
    for (double z : {-30.0, -1.0, 0.3, 20.0}) {
        const double lg = activate(z, Activation::logistic);
        CHECK(lg > 0.0);
        CHECK(lg < 1.0);
        const double th = activate(z, Activation::tanh);
        CHECK(th >= -1.0);
        CHECK(th <= 1.0);
        CHECK(activate(z, Activation::relu) >= 0.0);
    }

    // derivative matches a central finite difference
    for (Activation kind : {Activation::logistic, Activation::tanh}) {
        for (double z : {-2.0, -0.5, 0.0, 0.7, 3.0}) {
            const double eps = 1e-6;
            const double fd = (activate(z + eps, kind) - activate(z - eps, kind)) / (2 * eps);
            CHECK(activate_derivative(z, kind) == doctest::Approx(fd).epsilon(1e-6));
        }
    }
    CHECK(activate_derivative(-1.0, Activation::relu) == 0.0);
    CHECK(activate_derivative(1.0, Activation::relu) == 1.0);
}

TEST_CASE("softmax: symmetry, shift invariance, overflow safety") {
    const auto sym = softmax({0.0, 0.0});
    CHECK(sym[0] == doctest::Approx(0.5));
    CHECK(sym[1] == doctest::Approx(0.5));

    const auto base = softmax({0.3, -1.2});
    const auto shifted = softmax({0.3 + 500.0, -1.2 + 500.0});
    CHECK(base[0] == doctest::Approx(shifted[0]).epsilon(1e-12));

    const auto huge = softmax({1000.0, 0.0});
    CHECK(std::isfinite(huge[0]));
    CHECK(huge[0] == doctest::Approx(1.0));
    CHECK(huge[1] == doctest::Approx(0.0));

    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
        const double z0 = rng.uniform(-40, 40), z1 = rng.uniform(-40, 40);
        const auto p = softmax({z0, z1});
        CHECK(std::abs(p[0] + p[1] - 1.0) < 1e-9);
        CHECK(p[0] >= 0.0);
        CHECK(p[1] >= 0.0);

        // long-double oracle without the max-subtraction trick
        const long double e0 = std::exp(static_cast<long double>(z0));
        const long double e1 = std::exp(static_cast<long double>(z1));
        CHECK(p[0] == doctest::Approx(static_cast<double>(e0 / (e0 + e1))).epsilon(1e-12));
    }
}

TEST_CASE("dropout_mask: determinism, keep fraction, rejects keep_p <= 0") {
    Rng r1(5), r2(5);
    CHECK(dropout_mask(64, 0.5, r1) == dropout_mask(64, 0.5, r2));

    Rng rng(6);
    const auto all = dropout_mask(100, 1.0, rng);
    CHECK(std::count(all.begin(), all.end(), 1) == 100);

    const auto mask = dropout_mask(100000, 0.8, rng);
    const double kept = static_cast<double>(std::count(mask.begin(), mask.end(), 1)) / 100000.0;
    CHECK(kept > 0.79);
    CHECK(kept < 0.81);

    CHECK_THROWS_AS(dropout_mask(8, 0.0, rng), DataError);
}

TEST_CASE("forward: zero softmax yields even probabilities, keep_p=1 matches test mode") {
    Architecture arch = arch_4layer(10);
    arch.dropout_keep_p = 1.0;
    const Network net = init_network(arch, 17);

    Matrix x(3, 10);
    Rng rng(1);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();

    const ForwardTrace test_trace = forward(net, x, Mode::test);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(test_trace.probabilities(i, 0) == doctest::Approx(0.5));
        CHECK(test_trace.probabilities(i, 1) == doctest::Approx(0.5));
    }

    Rng drop(2);
    const ForwardTrace train_trace = forward(net, x, Mode::train, &drop);
    CHECK(train_trace.probabilities == test_trace.probabilities);
    CHECK(train_trace.masks.empty());

    // batch rows each sum to 1
    Architecture deep = arch_4layer(10);
    Network trained = init_network(deep, 23);
    Rng drop2(3);
    const ForwardTrace t2 = forward(trained, x, Mode::train, &drop2);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(std::abs(t2.probabilities(i, 0) + t2.probabilities(i, 1) - 1.0) < 1e-9);

    Matrix wrong(2, 7);
    CHECK_THROWS_AS(forward(net, wrong, Mode::test), DataError);

    // test mode is deterministic and ignores any rng
    Rng r1(1), r2(999);
    const ForwardTrace ta = forward(trained, x, Mode::test, &r1);
    const ForwardTrace tb = forward(trained, x, Mode::test, &r2);
    CHECK(ta.probabilities == tb.probabilities);
}

TEST_CASE("relu hidden activations are never negative") {
    Architecture arch = arch_4layer(12);
    arch.hidden_activation = Activation::relu;
    const Network net = init_network(arch, 77);
    Matrix x(5, 12);
    Rng rng(4);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
    const ForwardTrace trace = forward(net, x, Mode::test);
    for (std::size_t l = 0; l + 1 < trace.activations.size(); ++l)
        for (std::size_t i = 0; i < trace.activations[l].size(); ++i)
            CHECK(trace.activations[l].data()[i] >= 0.0);
}

TEST_CASE("predict: argmax with ties toward class 0, monotone rescale invariant") {
    Architecture arch = arch_4layer(4);
    Network net = init_network(arch, 29);
    Matrix x(6, 4);
    Rng rng(11);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();

    // zero softmax layer: both probabilities 0.5, tie breaks to 0
    const auto ties = predict(net, x);
    for (int p : ties) CHECK(p == 0);

    // give the softmax layer weights, then scale them: argmax unchanged
    for (std::size_t i = 0; i < net.layers.back().weights.size(); ++i)
        net.layers.back().weights.data()[i] = rng.uniform(-1.0, 1.0);
    const auto before = predict(net, x);
    Network scaled = net;
    for (std::size_t i = 0; i < scaled.layers.back().weights.size(); ++i)
        scaled.layers.back().weights.data()[i] *= 3.0;
    for (double& b : scaled.layers.back().bias) b *= 3.0;
    CHECK(predict(scaled, x) == before);
}

TEST_CASE("cost: perfect, uniform, and regularized cases") {
    Architecture arch = arch_4layer(4);
    const Network net = init_network(arch, 5); // zero softmax weights

    ForwardTrace trace;
    trace.probabilities = Matrix(2, 2);
    trace.probabilities(0, 0) = 1.0;
    trace.probabilities(1, 1) = 1.0;
    CHECK(cost(net, trace, {0, 1}, 0.0, 0.0) == 0.0);

    trace.probabilities(0, 0) = 0.5;
    trace.probabilities(0, 1) = 0.5;
    trace.probabilities(1, 0) = 0.5;
    trace.probabilities(1, 1) = 0.5;
    CHECK(cost(net, trace, {0, 1}, 0.0, 0.0) == doctest::Approx(std::log(2.0)));

    // zero weights: regularizers add nothing
    CHECK(cost(net, trace, {0, 1}, 0.5, 0.9) == doctest::Approx(std::log(2.0)));

    Network reg = net;
    reg.layers.back().weights(0, 0) = 2.0;
    reg.layers.back().weights(1, 1) = -1.0;
    // l2/2 * (4+1) + l1 * (2+1)
    CHECK(cost(reg, trace, {0, 1}, 0.1, 0.2) ==
          doctest::Approx(std::log(2.0) + 0.2 / 2.0 * 5.0 + 0.1 * 3.0));

    // probability floor keeps the cost finite
    trace.probabilities(0, 0) = 0.0;
    trace.probabilities(0, 1) = 1.0;
    CHECK(std::isfinite(cost(net, trace, {0, 1}, 0.0, 0.0)));
}

TEST_CASE("model serialization round-trips bitwise") {
    const auto dir = test_support::temp_dir("network-model");
    Architecture arch = arch_4layer(6);
    arch.hidden_activation = Activation::tanh;
    arch.dropout_keep_p = 0.7;
    arch.l1_lambda = 0.001;
    arch.l2_lambda = 0.002;
    const Network net = init_network(arch, 99);

    save_model(dir / "model.json", net);
    const Network back = load_model(dir / "model.json");
    CHECK(back.arch.layer_sizes == net.arch.layer_sizes);
    CHECK(back.arch.hidden_activation == net.arch.hidden_activation);
    CHECK(back.arch.dropout_keep_p == net.arch.dropout_keep_p);
    REQUIRE(back.layers.size() == net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        CHECK(back.layers[l].weights == net.layers[l].weights);
        CHECK(back.layers[l].bias == net.layers[l].bias);
    }
    CHECK_THROWS_AS(load_model(dir / "missing.json"), DataError);
}
