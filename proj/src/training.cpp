#include "churn/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "churn/errors.hpp"
#include "churn/eval.hpp"
#include "churn/rng.hpp"

namespace churn::training {

using network::ForwardTrace;
using network::LayerParams;
using network::Mode;
using network::Network;

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw DataError("learning rate must be positive");
    if (momentum_init < 0.0 || momentum_init >= 1.0)
        throw DataError("initial momentum must be in [0, 1)");
    if (momentum_cap < momentum_init) throw DataError("momentum cap below initial momentum");
    if (momentum_growth < 1.0) throw DataError("momentum growth must be >= 1");
    if (lr_decay <= 0.0 || lr_decay >= 1.0) throw DataError("lr decay must be in (0, 1)");
    if (batch_size == 0) throw DataError("batch size must be positive");
    if (max_epochs == 0) throw DataError("max epochs must be positive");
    if (patience == 0) throw DataError("patience must be positive");
}

Gradients backward(const Network& net, const ForwardTrace& trace, const std::vector<int>& y) {
    const std::size_t n_layers = net.layers.size();
    const std::size_t m = trace.probabilities.rows();
    if (m != y.size()) throw DataError("backward: label count does not match batch size");
    if (trace.pre_activations.size() != n_layers)
        throw DataError("backward: trace does not match network depth");

    Gradients grads(n_layers);

    // softmax layer: (probability - indicator) / m
    Matrix delta = trace.probabilities;
    for (std::size_t i = 0; i < m; ++i) delta(i, static_cast<std::size_t>(y[i])) -= 1.0;
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < delta.size(); ++i) delta.data()[i] *= inv_m;

    for (std::size_t l = n_layers; l-- > 0;) {
        const Matrix& below = l == 0 ? trace.input : trace.activations[l - 1];
        linalg::matmul_at_b(below, delta, grads[l].weights);
        grads[l].bias = linalg::column_sums(delta);

        if (l + 1 == n_layers) {
            // regularizer gradient on the output layer only
            const Matrix& w = net.layers[l].weights;
            const double l1 = net.arch.l1_lambda, l2 = net.arch.l2_lambda;
            if (l1 != 0.0 || l2 != 0.0)
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const double wi = w.data()[i];
                    const double sign = wi > 0.0 ? 1.0 : (wi < 0.0 ? -1.0 : 0.0);
                    grads[l].weights.data()[i] += l2 * wi + l1 * sign;
                }
        }

        if (l == 0) break;

        Matrix upstream;
        linalg::matmul_a_bt(delta, net.layers[l].weights, upstream);
        if (!trace.masks.empty()) {
            const Matrix& factors = trace.masks[l - 1];
            for (std::size_t i = 0; i < upstream.size(); ++i)
                upstream.data()[i] *= factors.data()[i];
        }
        const Matrix& z = trace.pre_activations[l - 1];
        for (std::size_t i = 0; i < upstream.size(); ++i)
            upstream.data()[i] *= network::activate_derivative(z.data()[i],
                                                               net.arch.hidden_activation);
        delta = std::move(upstream);
    }
    return grads;
}

namespace {

bool all_finite(const LayerParams& p) {
    for (std::size_t i = 0; i < p.weights.size(); ++i)
        if (!std::isfinite(p.weights.data()[i])) return false;
    for (double b : p.bias)
        if (!std::isfinite(b)) return false;
    return true;
}

} // namespace

void sgd_momentum_step(std::vector<LayerParams>& params, const Gradients& grads,
                       std::vector<LayerParams>& velocity, double lr, double momentum) {
    if (params.size() != grads.size() || params.size() != velocity.size())
        throw DataError("sgd_momentum_step: layer count mismatch");
    for (std::size_t l = 0; l < params.size(); ++l) {
        if (!all_finite(grads[l]))
            throw DivergenceError("divergence: non-finite gradient in layer " + std::to_string(l));
        LayerParams& p = params[l];
        LayerParams& v = velocity[l];
        const LayerParams& g = grads[l];
        if (p.weights.rows() != g.weights.rows() || p.weights.cols() != g.weights.cols())
            throw DataError("sgd_momentum_step: gradient shape mismatch in layer " +
                            std::to_string(l));
        for (std::size_t i = 0; i < p.weights.size(); ++i) {
            v.weights.data()[i] = momentum * v.weights.data()[i] - lr * g.weights.data()[i];
            p.weights.data()[i] += v.weights.data()[i];
        }
        for (std::size_t i = 0; i < p.bias.size(); ++i) {
            v.bias[i] = momentum * v.bias[i] - lr * g.bias[i];
            p.bias[i] += v.bias[i];
        }
    }
}

void anneal(TrainState& state, const TrainConfig& config) {
    const double k = static_cast<double>(state.epoch);
    state.lr = config.learning_rate * std::pow(config.lr_decay, k);
    state.momentum = std::min(config.momentum_cap,
                              config.momentum_init * std::pow(config.momentum_growth, k));
}

Matrix dataset_features(const features::LabeledDataset& dataset) {
    if (dataset.rows.empty()) return Matrix();
    Matrix x(dataset.rows.size(), dataset.rows.front().features.size());
    for (std::size_t i = 0; i < dataset.rows.size(); ++i)
        for (std::size_t j = 0; j < dataset.rows[i].features.size(); ++j)
            x(i, j) = dataset.rows[i].features[j];
    return x;
}

std::vector<int> dataset_labels(const features::LabeledDataset& dataset) {
    std::vector<int> y(dataset.rows.size());
    for (std::size_t i = 0; i < dataset.rows.size(); ++i) y[i] = dataset.rows[i].label;
    return y;
}

namespace {

std::vector<LayerParams> zero_like(const std::vector<LayerParams>& params) {
    std::vector<LayerParams> out(params.size());
    for (std::size_t l = 0; l < params.size(); ++l) {
        out[l].weights = Matrix(params[l].weights.rows(), params[l].weights.cols());
        out[l].bias.assign(params[l].bias.size(), 0.0);
    }
    return out;
}

Matrix slice_rows(const Matrix& x, const std::vector<std::size_t>& order, std::size_t begin,
                  std::size_t end) {
    Matrix out(end - begin, x.cols());
    for (std::size_t i = begin; i < end; ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) out(i - begin, j) = x(order[i], j);
    return out;
}

} // namespace

TrainResult train(Network net, const features::LabeledDataset& train_set,
                  const features::LabeledDataset& valid_set, const TrainConfig& config) {
    config.validate();
    net.arch.validate();
    if (train_set.rows.empty()) throw DataError("train: empty training set");
    if (valid_set.rows.empty()) throw DataError("train: empty validation set");

    const Matrix x_train = dataset_features(train_set);
    const std::vector<int> y_train = dataset_labels(train_set);
    const Matrix x_valid = dataset_features(valid_set);
    const std::vector<int> y_valid = dataset_labels(valid_set);

    TrainState state;
    state.lr = config.learning_rate;
    state.momentum = config.momentum_init;
    state.velocity = zero_like(net.layers);
    state.best_valid_error = std::numeric_limits<double>::infinity();

    if (std::all_of(y_valid.begin(), y_valid.end(), [&](int v) { return v == y_valid.front(); }))
        state.warnings.push_back("validation set has a single class; early stopping is weak");

    Rng dropout_rng(derive_seed(config.seed, "dropout"));
    const std::uint64_t shuffle_base = derive_seed(config.seed, "shuffle");

    Network best = net;
    const std::size_t n = train_set.rows.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        Rng epoch_rng(derive_seed(shuffle_base, epoch));
        shuffle(order, epoch_rng);

        double cost_sum = 0.0;
        for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
            const std::size_t end = std::min(n, begin + config.batch_size);
            const Matrix x_batch = slice_rows(x_train, order, begin, end);
            std::vector<int> y_batch(end - begin);
            for (std::size_t i = begin; i < end; ++i) y_batch[i - begin] = y_train[order[i]];

            const ForwardTrace trace = network::forward(net, x_batch, Mode::train, &dropout_rng);
            cost_sum += cost(net, trace, y_batch, net.arch.l1_lambda, net.arch.l2_lambda) *
                        static_cast<double>(end - begin);
            const Gradients grads = backward(net, trace, y_batch);
            sgd_momentum_step(net.layers, grads, state.velocity, state.lr, state.momentum);
        }
        const double train_cost = cost_sum / static_cast<double>(n);
        const double valid_error =
            eval::zero_one_loss(network::predict(net, x_valid), y_valid);

        state.history.push_back({epoch, state.lr, state.momentum, train_cost, valid_error});

        if (valid_error < state.best_valid_error) {
            state.best_valid_error = valid_error;
            state.epochs_since_improvement = 0;
            best = net;
        } else {
            ++state.epochs_since_improvement;
        }
        state.epoch = epoch;
        if (state.epochs_since_improvement >= config.patience) break;
        anneal(state, config);
    }
    return {std::move(best), std::move(state)};
}

namespace {

// Independent long-double evaluation of the regularized cost; shares no
// code with forward()/cost() so the finite-difference route stays an
// oracle for the analytic one.
long double cost_longdouble(const Network& net, const Matrix& x, const std::vector<int>& y) {
    const std::size_t m = x.rows();
    long double nll = 0.0L;
    for (std::size_t sample = 0; sample < m; ++sample) {
        std::vector<long double> a(x.cols());
        for (std::size_t j = 0; j < x.cols(); ++j) a[j] = x(sample, j);
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            const LayerParams& params = net.layers[l];
            const std::size_t n_out = params.weights.cols();
            std::vector<long double> z(n_out);
            for (std::size_t jj = 0; jj < n_out; ++jj) {
                long double acc = params.bias[jj];
                for (std::size_t ii = 0; ii < a.size(); ++ii)
                    acc += a[ii] * static_cast<long double>(params.weights(ii, jj));
                z[jj] = acc;
            }
            if (l + 1 == net.layers.size()) {
                long double zmax = z[0];
                for (long double v : z) zmax = std::max(zmax, v);
                long double denom = 0.0L;
                for (long double& v : z) {
                    v = std::exp(v - zmax);
                    denom += v;
                }
                const long double p = z[static_cast<std::size_t>(y[sample])] / denom;
                nll -= std::log(std::max(p, static_cast<long double>(network::kLogFloor)));
            } else {
                for (long double& v : z) {
                    switch (net.arch.hidden_activation) {
                    case network::Activation::logistic: v = 1.0L / (1.0L + std::exp(-v)); break;
                    case network::Activation::tanh: v = std::tanh(v); break;
                    case network::Activation::relu: v = v > 0.0L ? v : 0.0L; break;
                    }
                }
                a = std::move(z);
            }
        }
    }
    nll /= static_cast<long double>(m);

    const Matrix& w = net.layers.back().weights;
    long double l1_term = 0.0L, l2_term = 0.0L;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const long double wi = w.data()[i];
        l1_term += std::abs(wi);
        l2_term += wi * wi;
    }
    return nll + static_cast<long double>(net.arch.l2_lambda) / 2.0L * l2_term +
           static_cast<long double>(net.arch.l1_lambda) * l1_term;
}

double relative_error(double analytic, long double numeric) {
    const long double a = std::abs(static_cast<long double>(analytic));
    const long double b = std::abs(numeric);
    const long double scale = std::max(1.0L, std::max(a, b));
    return static_cast<double>(std::abs(static_cast<long double>(analytic) - numeric) / scale);
}

} // namespace

double gradient_check(const Network& net, const Matrix& x, const std::vector<int>& y,
                      double eps) {
    Network probe = net;
    probe.arch.dropout_keep_p = 1.0; // dropout off for the check

    const ForwardTrace trace = network::forward(probe, x, Mode::train);
    const Gradients grads = backward(probe, trace, y);

    double worst = 0.0;
    auto check_param = [&](double& param, double analytic) {
        const double original = param;
        param = original + eps;
        const long double up = cost_longdouble(probe, x, y);
        param = original - eps;
        const long double down = cost_longdouble(probe, x, y);
        param = original;
        const long double numeric = (up - down) / (2.0L * static_cast<long double>(eps));
        worst = std::max(worst, relative_error(analytic, numeric));
    };

    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        LayerParams& params = probe.layers[l];
        for (std::size_t i = 0; i < params.weights.size(); ++i)
            check_param(params.weights.data()[i], grads[l].weights.data()[i]);
        for (std::size_t i = 0; i < params.bias.size(); ++i)
            check_param(params.bias[i], grads[l].bias[i]);
    }
    return worst;
}

void write_training_log(const std::filesystem::path& path, const TrainState& state) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write training log: " + path.string());
    out << "epoch,lr,momentum,train_cost,valid_error\n";
    for (const EpochStats& row : state.history)
        out << row.epoch << ',' << features::format_double(row.lr) << ','
            << features::format_double(row.momentum) << ','
            << features::format_double(row.train_cost) << ','
            << features::format_double(row.valid_error) << '\n';
}

} // namespace churn::training
