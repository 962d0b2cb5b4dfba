#include "churn/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "churn/errors.hpp"

namespace churn::network {

Activation activation_from_name(const std::string& name) {
    if (name == "logistic") return Activation::logistic;
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    throw DataError("unknown activation: " + name);
}

std::string activation_name(Activation a) {
    switch (a) {
    case Activation::logistic: return "logistic";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    }
    return "relu";
}

void Architecture::validate() const {
    if (layer_sizes.size() < 3)
        throw DataError("architecture needs at least one hidden layer");
    if (layer_sizes.back() != 2)
        throw DataError("output layer must have two neurons, one per class");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw DataError("architecture has a zero-width layer");
    if (dropout_keep_p <= 0.0 || dropout_keep_p > 1.0)
        throw DataError("dropout keep probability must be in (0, 1]");
    if (l1_lambda < 0.0 || l2_lambda < 0.0)
        throw DataError("regularization constants must be non-negative");
}

Network init_network(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    Network net;
    net.arch = arch;
    Rng rng(seed);
    const std::size_t n_layers = arch.layer_sizes.size() - 1;
    net.layers.reserve(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t n_in = arch.layer_sizes[l];
        const std::size_t n_out = arch.layer_sizes[l + 1];
        LayerParams params;
        params.weights = Matrix(n_in, n_out);
        params.bias.assign(n_out, 0.0);
        const bool is_output = l + 1 == n_layers;
        if (!is_output) {
            // keeps pre-activation variance stable across 4-6 layer stacks
            const double r = std::sqrt(6.0 / static_cast<double>(n_in + n_out));
            for (std::size_t i = 0; i < n_in; ++i)
                for (std::size_t j = 0; j < n_out; ++j)
                    params.weights(i, j) = rng.uniform(-r, r);
        }
        net.layers.push_back(std::move(params));
    }
    return net;
}

double activate(double z, Activation kind) {
    switch (kind) {
    case Activation::logistic: return 1.0 / (1.0 + std::exp(-z));
    case Activation::tanh: return std::tanh(z);
    case Activation::relu: return z > 0.0 ? z : 0.0;
    }
    return z;
}

double activate_derivative(double z, Activation kind) {
    switch (kind) {
    case Activation::logistic: {
        const double f = 1.0 / (1.0 + std::exp(-z));
        return f * (1.0 - f);
    }
    case Activation::tanh: {
        const double f = std::tanh(z);
        return 1.0 - f * f;
    }
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

void activate_inplace(Matrix& z, Activation kind) {
    double* p = z.data();
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = activate(p[i], kind);
}

std::vector<double> softmax(const std::vector<double>& z) {
    std::vector<double> out(z.size());
    const double zmax = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] - zmax);
        denom += out[i];
    }
    for (double& v : out) v /= denom;
    return out;
}

void softmax_rows_inplace(Matrix& z) {
    const std::size_t n = z.cols();
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double zmax = z(i, 0);
        for (std::size_t j = 1; j < n; ++j) zmax = std::max(zmax, z(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            z(i, j) = std::exp(z(i, j) - zmax);
            denom += z(i, j);
        }
        for (std::size_t j = 0; j < n; ++j) z(i, j) /= denom;
    }
}

std::vector<std::uint8_t> dropout_mask(std::size_t n, double keep_p, Rng& rng) {
    if (keep_p <= 0.0) throw DataError("dropout keep probability must be positive");
    std::vector<std::uint8_t> mask(n, 1);
    if (keep_p >= 1.0) return mask;
    for (std::size_t i = 0; i < n; ++i) mask[i] = rng.bernoulli(keep_p) ? 1 : 0;
    return mask;
}

ForwardTrace forward(const Network& net, const Matrix& x, Mode mode, Rng* rng) {
    if (x.cols() != net.arch.input_size())
        throw DataError("forward: input has " + std::to_string(x.cols()) +
                        " features, network expects " + std::to_string(net.arch.input_size()));

    const double keep_p = net.arch.dropout_keep_p;
    const bool use_dropout = mode == Mode::train && keep_p < 1.0;
    if (use_dropout && rng == nullptr)
        throw DataError("forward: train mode with dropout needs an rng");

    ForwardTrace trace;
    trace.input = x;
    const std::size_t n_layers = net.layers.size();
    trace.pre_activations.reserve(n_layers);
    trace.activations.reserve(n_layers);

    const Matrix* current = &trace.input;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const LayerParams& params = net.layers[l];
        Matrix z;
        linalg::matmul(*current, params.weights, z);
        linalg::add_row_inplace(z, params.bias);
        trace.pre_activations.push_back(z);

        const bool is_output = l + 1 == n_layers;
        if (is_output) {
            softmax_rows_inplace(z);
            trace.probabilities = z;
            trace.activations.push_back(std::move(z));
        } else {
            activate_inplace(z, net.arch.hidden_activation);
            if (use_dropout) {
                Matrix factors(z.rows(), z.cols());
                const auto mask = dropout_mask(z.size(), keep_p, *rng);
                const double scale = 1.0 / keep_p;
                for (std::size_t i = 0; i < z.size(); ++i) {
                    factors.data()[i] = mask[i] ? scale : 0.0;
                    z.data()[i] *= factors.data()[i];
                }
                trace.masks.push_back(std::move(factors));
            }
            trace.activations.push_back(std::move(z));
        }
        current = &trace.activations.back();
    }
    return trace;
}

std::vector<int> predict(const Network& net, const Matrix& x) {
    const ForwardTrace trace = forward(net, x, Mode::test);
    std::vector<int> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
        out[i] = trace.probabilities(i, 1) > trace.probabilities(i, 0) ? 1 : 0;
    return out;
}

double cost(const Network& net, const ForwardTrace& trace, const std::vector<int>& y,
            double l1, double l2) {
    const std::size_t m = trace.probabilities.rows();
    if (m != y.size()) throw DataError("cost: label count does not match batch size");

    double nll = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double p = trace.probabilities(i, static_cast<std::size_t>(y[i]));
        nll -= std::log(std::max(p, kLogFloor));
    }
    nll /= static_cast<double>(m);

    // regularizers cover the softmax layer only
    const Matrix& w = net.layers.back().weights;
    double l1_term = 0.0, l2_term = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        l1_term += std::abs(w.data()[i]);
        l2_term += w.data()[i] * w.data()[i];
    }
    return nll + l2 / 2.0 * l2_term + l1 * l1_term;
}

void save_model(const std::filesystem::path& path, const Network& net) {
    nlohmann::json doc;
    doc["format"] = "churn-model/1";
    doc["architecture"] = {{"layer_sizes", net.arch.layer_sizes},
                           {"hidden_activation", activation_name(net.arch.hidden_activation)},
                           {"dropout_keep_p", net.arch.dropout_keep_p},
                           {"l1_lambda", net.arch.l1_lambda},
                           {"l2_lambda", net.arch.l2_lambda}};
    nlohmann::json layers = nlohmann::json::array();
    for (const LayerParams& params : net.layers) {
        layers.push_back({{"rows", params.weights.rows()},
                          {"cols", params.weights.cols()},
                          {"weights", params.weights.values()},
                          {"bias", params.bias}});
    }
    doc["layers"] = std::move(layers);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model: " + path.string());
    out << doc.dump(2) << '\n';
}

Network load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read model: " + path.string());
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || doc.value("format", "") != "churn-model/1")
        throw DataError("not a churn model file: " + path.string());

    Network net;
    const auto& arch = doc.at("architecture");
    net.arch.layer_sizes = arch.at("layer_sizes").get<std::vector<std::size_t>>();
    net.arch.hidden_activation = activation_from_name(arch.at("hidden_activation").get<std::string>());
    net.arch.dropout_keep_p = arch.at("dropout_keep_p").get<double>();
    net.arch.l1_lambda = arch.at("l1_lambda").get<double>();
    net.arch.l2_lambda = arch.at("l2_lambda").get<double>();
    net.arch.validate();

    for (const auto& layer : doc.at("layers")) {
        LayerParams params;
        const auto rows = layer.at("rows").get<std::size_t>();
        const auto cols = layer.at("cols").get<std::size_t>();
        const auto weights = layer.at("weights").get<std::vector<double>>();
        if (weights.size() != rows * cols) throw DataError("model weight shape mismatch");
        params.weights = Matrix(rows, cols);
        std::copy(weights.begin(), weights.end(), params.weights.data());
        params.bias = layer.at("bias").get<std::vector<double>>();
        if (params.bias.size() != cols) throw DataError("model bias shape mismatch");
        net.layers.push_back(std::move(params));
    }
    if (net.layers.size() != net.arch.layer_sizes.size() - 1)
        throw DataError("model layer count does not match architecture");
    return net;
}

Matrix dataset_matrix(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Matrix();
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

} // namespace churn::network
