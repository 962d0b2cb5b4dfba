#ifndef CHURN_TRAINING_HPP
#define CHURN_TRAINING_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "churn/features.hpp"
#include "churn/network.hpp"

namespace churn::training {

struct TrainConfig {
    double learning_rate = 0.001;  // sweep range 0.0001 .. 0.01
    double momentum_init = 0.5;
    double momentum_growth = 1.02; // per epoch, until the cap
    double momentum_cap = 0.99;
    double lr_decay = 0.985;       // per epoch
    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;     // epochs without validation improvement
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochStats {
    std::size_t epoch = 0; // 1-based
    double lr = 0.0;
    double momentum = 0.0;
    double train_cost = 0.0;
    double valid_error = 0.0;
};

struct TrainState {
    std::size_t epoch = 0; // completed epochs
    double lr = 0.0;
    double momentum = 0.0;
    std::vector<network::LayerParams> velocity;
    double best_valid_error = 0.0;
    std::size_t epochs_since_improvement = 0;
    std::vector<EpochStats> history;
    std::vector<std::string> warnings;
};

using Gradients = std::vector<network::LayerParams>;

// Exact analytic gradients of the regularized cost. The softmax-layer
// gradient is mean(probability - indicator) through the activations, plus
// l2*W + l1*sign(W) on that layer only; hidden gradients chain through the
// activation derivatives with the dropout factors applied.
Gradients backward(const network::Network& net, const network::ForwardTrace& trace,
                   const std::vector<int>& y);

// velocity' = momentum * velocity - lr * grads; params' = params + velocity'.
// Non-finite gradients -> DivergenceError naming the layer.
void sgd_momentum_step(std::vector<network::LayerParams>& params, const Gradients& grads,
                       std::vector<network::LayerParams>& velocity, double lr, double momentum);

// Schedule after k completed epochs, evaluated in closed form so that
// lr = lr0 * decay^k and momentum = min(cap, m0 * growth^k) hold exactly:
//   momentum grows 2% per epoch until it reaches 0.99, the learning rate
//   decays 1.5% per epoch.
void anneal(TrainState& state, const TrainConfig& config);

struct TrainResult {
    network::Network best; // snapshot at the lowest validation error
    TrainState state;
};

// Mini-batch SGD with momentum: shuffled batches, train-mode forward,
// backward, momentum step; validation zero-one error after each epoch;
// anneal at epoch end; stop after `patience` epochs without improvement.
TrainResult train(network::Network net, const features::LabeledDataset& train_set,
                  const features::LabeledDataset& valid_set, const TrainConfig& config);

// Max relative error between backward() and central finite differences of
// an independent long-double cost evaluation over every parameter.
// Dropout must be off.
double gradient_check(const network::Network& net, const Matrix& x, const std::vector<int>& y,
                      double eps = 1e-5);

// CSV: epoch,lr,momentum,train_cost,valid_error
void write_training_log(const std::filesystem::path& path, const TrainState& state);

Matrix dataset_features(const features::LabeledDataset& dataset);
std::vector<int> dataset_labels(const features::LabeledDataset& dataset);

} // namespace churn::training

#endif
