#ifndef CHURN_NETWORK_HPP
#define CHURN_NETWORK_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "churn/linalg.hpp"
#include "churn/rng.hpp"

namespace churn::network {

enum class Activation { logistic, tanh, relu };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);

// layer_sizes runs input, hidden..., output; the output layer is the
// two-neuron softmax classifier. "Total layers" in sweep terms counts
// every entry of layer_sizes.
struct Architecture {
    std::vector<std::size_t> layer_sizes;
    Activation hidden_activation = Activation::relu;
    double dropout_keep_p = 0.5; // probability a hidden neuron stays active
    double l1_lambda = 0.0;
    double l2_lambda = 0.0;

    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t total_layers() const { return layer_sizes.size(); }
    void validate() const; // >= 1 hidden layer, output size 2, keep_p in (0,1]
};

struct LayerParams {
    Matrix weights; // n_in x n_out
    std::vector<double> bias;
};

struct Network {
    Architecture arch;
    std::vector<LayerParams> layers; // hidden..., softmax output
};

// Hidden weights ~ Uniform(-r, r) with r = sqrt(6 / (n_in + n_out)),
// hidden biases zero; the softmax layer is instantiated with zeros.
Network init_network(const Architecture& arch, std::uint64_t seed);

double activate(double z, Activation kind);
// derivative expressed in terms of z (pre-activation)
double activate_derivative(double z, Activation kind);
void activate_inplace(Matrix& z, Activation kind);

// exp-normalized with max subtraction; output sums to 1
std::vector<double> softmax(const std::vector<double>& z);
void softmax_rows_inplace(Matrix& z);

// Independent Bernoulli(keep_p) entries. keep_p <= 0 would turn the whole
// layer off and is rejected.
std::vector<std::uint8_t> dropout_mask(std::size_t n, double keep_p, Rng& rng);

enum class Mode { train, test };

struct ForwardTrace {
    Matrix input;                       // the batch, rows are samples
    std::vector<Matrix> pre_activations; // z per layer
    std::vector<Matrix> activations;     // layer outputs after mask/scale
    std::vector<Matrix> masks;           // inverted-dropout factors {0, 1/keep_p}; train mode only
    Matrix probabilities;                // m x 2, rows sum to 1
};

// Train mode draws a fresh mask per hidden layer and rescales kept
// activations by 1/keep_p (inverted dropout), so test mode is a plain
// deterministic pass. rng may be null in test mode or when keep_p == 1.
ForwardTrace forward(const Network& net, const Matrix& x, Mode mode, Rng* rng = nullptr);

// argmax of the test-mode probabilities; ties break toward class 0
std::vector<int> predict(const Network& net, const Matrix& x);

// Mean negative log likelihood plus l2/2*sum(W^2) + l1*sum|W| over the
// softmax layer only. True-class probabilities are floored at 1e-12.
double cost(const Network& net, const ForwardTrace& trace, const std::vector<int>& y,
            double l1, double l2);

constexpr double kLogFloor = 1e-12;

// JSON model format, versioned; weights stored row-major per layer.
void save_model(const std::filesystem::path& path, const Network& net);
Network load_model(const std::filesystem::path& path);

Matrix dataset_matrix(const std::vector<std::vector<double>>& rows);

} // namespace churn::network

#endif
