#ifndef CHURN_SYNTH_HPP
#define CHURN_SYNTH_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "churn/features.hpp"

namespace churn::synth {

enum class Regime { subscription, nonsubscription };

Regime regime_from_name(const std::string& name);
std::string regime_name(Regime r);

struct SynthConfig {
    std::size_t n_users = 2000;
    int days = 390;
    double churn_fraction = 0.35;
    Regime regime = Regime::subscription;
    double base_daily_rate = 2.0;
    double decay_factor = 0.8; // per-day rate multiplier over the pre-churn fade
    std::uint64_t seed = 0;
    std::int64_t origin = 1600000000; // unix start of day 0
    int split_length_days = 30;
    int window_splits = 2;
    int horizon_splits = 1;
    double nonuser_fraction = 0.05; // anonymous/non-user lines, exercises ingest filtering

    void validate() const;
    features::DatasetSpec dataset_spec(int periods = 100) const;
};

struct GeneratedLog {
    std::vector<std::vector<std::string>> day_lines; // [day][line], time-ordered
    // three-rule labels over the first window + horizon, for every
    // registered user with an event in that range
    std::vector<features::UserLabel> ground_truth;
};

// Subscription regime: retained users emit at a steady daily rate;
// churners fade over their final weeks and then cease, placed so the
// 30-day rule is never borderline at a split edge. Nonsubscription
// regime: everyone emits sporadic bursts with long gaps, so the classes
// barely separate. Deterministic under seed; per-user streams derive
// from it.
GeneratedLog generate_log(const SynthConfig& config);

// One raw-dump-NNN.jsonl per day plus ground_truth.csv.
void write_log(const std::filesystem::path& dir, const GeneratedLog& log);

std::vector<features::UserLabel> read_ground_truth(const std::filesystem::path& path);

// Trains a single softmax layer (no hidden layers) on half the rows and
// returns balanced accuracy on the other half: a quantitative
// separability score standing in for eyeballing a 2-d embedding.
double verify_separability(const features::LabeledDataset& dataset, std::uint64_t seed);

} // namespace churn::synth

#endif
