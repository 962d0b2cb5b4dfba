#ifndef CHURN_EVAL_HPP
#define CHURN_EVAL_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "churn/features.hpp"
#include "churn/network.hpp"
#include "churn/training.hpp"

namespace churn::eval {

// Fraction of mismatches; accuracy = (1 - error) * 100. Empty -> DataError.
double zero_one_loss(const std::vector<int>& predictions, const std::vector<int>& labels);

// simple: tanh hidden units, no dropout, no momentum (the comparison
// baseline); proposed: relu, dropout, momentum SGD with annealing. L1/L2
// are retained by both.
enum class Variant { simple, proposed };

Variant variant_from_name(const std::string& name);
std::string variant_name(Variant v);

// Hidden widths taper from the largest power of two below the input size,
// halving per layer with a floor of 8. total_layers counts input + hidden
// + output, e.g. 4 layers at 100 periods -> 100, 64, 32, 2.
std::vector<std::size_t> hidden_widths(int total_layers, int periods);

struct VariantSetup {
    network::Architecture arch;
    training::TrainConfig config;
};

VariantSetup make_variant(Variant variant, int total_layers, int periods,
                          const network::Architecture& base_arch,
                          const training::TrainConfig& base_config);

struct SweepGrid {
    std::vector<double> learning_rates = {0.0001, 0.001, 0.01};
    std::vector<int> total_layers = {4, 5, 6};
    std::vector<Variant> variants = {Variant::simple, Variant::proposed};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::uint64_t base_seed = 0; // mixed into every cell seed

    void validate() const;
};

struct SweepCell {
    int split = 0;
    int horizon = 1;
    Variant variant = Variant::simple;
    double lr = 0.0;
    int layers = 0;
    std::uint64_t seed = 0;
    double test_error = 0.0;
    std::size_t epochs = 0;
    double seconds = 0.0;
    std::string failure; // empty on success
};

struct SweepResult {
    std::vector<SweepCell> cells; // canonical grid order
};

struct SplitDatasets {
    int split_index = 0;
    int horizon_splits = 1;
    features::LabeledDataset train, valid, test;
};

// Trains and tests every (split x variant x lr x layers x seed) cell on a
// bounded worker pool. Cell seeds derive from the cell key, so the result
// is identical for any worker count. Failed cells carry the message and a
// NaN error; the sweep continues.
SweepResult run_sweep(const std::vector<SplitDatasets>& datasets, const SweepGrid& grid,
                      const network::Architecture& base_arch,
                      const training::TrainConfig& base_config, std::size_t workers);

struct SummaryRow {
    int split = 0;
    Variant variant = Variant::simple;
    std::size_t cells = 0;
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
    SweepCell best;
};

// Per (split, variant): five-number summary over successful cells plus the
// best cell. Quartiles use linear interpolation (type 7).
std::vector<SummaryRow> summarize(const SweepResult& result);

// q in [0, 1] over sorted values, linear interpolation (type 7)
double quantile_type7(const std::vector<double>& sorted_values, double q);

// CSV: split,horizon,variant,lr,layers,seed,test_error,epochs,seconds
void write_cells_csv(const std::filesystem::path& path, const SweepResult& result);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

} // namespace churn::eval

#endif
