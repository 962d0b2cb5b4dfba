#ifndef CHURN_FEATURES_HPP
#define CHURN_FEATURES_HPP

#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "churn/dataflow.hpp"
#include "churn/ingest.hpp"

namespace churn::features {

constexpr std::int64_t kSecondsPerDay = 86400;

// A fixed-length contiguous time window of the event stream; datasets are
// built per split.
struct SplitSpec {
    int index = 0;
    std::int64_t start = 0;
    std::int64_t end = 0; // start + split_length_days * 86400
    int split_length_days = 30;
};

SplitSpec make_split(std::int64_t origin, int index, int split_length_days);

// The input window: consecutive splits subdivided into `periods` bins.
struct WindowSpec {
    std::vector<SplitSpec> splits;
    int periods = 100;

    std::int64_t start() const { return splits.front().start; }
    std::int64_t end() const { return splits.back().end; }
    void validate() const; // splits contiguous, periods >= 1
};

struct UserEventVector {
    std::uint64_t user_id = 0;
    std::vector<std::uint32_t> counts; // one per period

    auto operator<=>(const UserEventVector&) const = default;
};

// -1 new user, 0 active, 1 churned
struct UserLabel {
    std::uint64_t user_id = 0;
    int label = 0;

    auto operator<=>(const UserLabel&) const = default;
};

struct Row {
    std::uint64_t user_id = 0;
    std::vector<double> features;
    int label = 0;

    auto operator<=>(const Row&) const = default;
};

struct LabeledDataset {
    std::vector<Row> rows;
    int split_index = 0; // first split of the input window
    int horizon_splits = 1;
    int periods = 100;
};

// Index of the period bin containing t. Periods are percentage positions
// of the window: floor(periods * (t - start) / span), clamped into the
// last bin. t outside [start, end) is a caller bug.
int assign_period(std::int64_t t, const WindowSpec& window);

// One vector per user with at least one in-window event, sorted by user id.
std::vector<UserEventVector> build_event_vectors(const std::vector<ingest::EventRecord>& records,
                                                 const WindowSpec& window);

// The three-rule churn label. The new-user rule wins when both trigger:
//   span(first..last) < inactivity      -> -1
//   horizon_end - last > inactivity     ->  1
//   otherwise                           ->  0
int label_from_span(std::int64_t first_event, std::int64_t last_event,
                    std::int64_t horizon_end, int inactivity_days);

// Same rule over one user's events inside window + horizon (any order).
// Empty input -> DataError.
int compute_churn_label(const std::vector<std::int64_t>& event_times,
                        std::int64_t horizon_end, int inactivity_days = 30);

// Inner join on user id; -1 rows dropped; users without window vectors
// excluded. Duplicate user ids on either side -> DataError.
LabeledDataset assemble_split_dataset(const std::vector<UserEventVector>& vectors,
                                      const std::vector<UserLabel>& labels,
                                      int split_index, int horizon_splits);

// Dataset-wide max count; fit on the training split only and reused on
// validation/test, where values are clamped into [0, 1].
struct Scaler {
    double max_count = 1.0;
};

Scaler fit_scaler(const LabeledDataset& dataset);
void apply_scaler(LabeledDataset& dataset, const Scaler& scaler);
Scaler normalize(LabeledDataset& dataset);

struct BalanceCounts {
    std::size_t pos_before = 0;
    std::size_t neg_before = 0;
    std::size_t pos_after = 0;
    std::size_t neg_after = 0;
};

// Random under-sampling of the majority class down to the minority count.
// A class with zero samples -> DataError ("degenerate split").
LabeledDataset balance_undersample(const LabeledDataset& dataset, std::uint64_t seed,
                                   BalanceCounts* counts = nullptr);

// 50% - 50% random split; validation gets the extra row on odd sizes.
std::pair<LabeledDataset, LabeledDataset> split_val_test(const LabeledDataset& dataset,
                                                         std::uint64_t seed);

// ---- dataset-generation pipeline -----------------------------------------
// The transformation DAG per input window: scrape -> in-range filter ->
// per-user period vectors / per-user (first, last) spans -> labels ->
// join -> drop -1. The plain functions above are the sequential
// reference; the *_dataflow variants run the same chain on the engine.

struct DatasetSpec {
    std::int64_t origin = 0; // unix start of split 0
    int split_length_days = 30;
    int window_splits = 2;
    int horizon_splits = 1;
    int periods = 100;
    int inactivity_days = 30;
};

WindowSpec window_of(const DatasetSpec& spec, int first_split);
std::int64_t horizon_end_of(const DatasetSpec& spec, int first_split);

// Splits wholly covered by events up to and including max_event_time.
int covered_splits(const DatasetSpec& spec, std::int64_t max_event_time);

// Scrape stage on the engine: lines -> records of registered users.
std::vector<ingest::EventRecord> scrape_dataflow(const std::vector<std::string>& lines,
                                                 ingest::TimeUnit unit,
                                                 const dataflow::ExecOptions& opts);

// Labels for every user with events inside window + horizon.
std::vector<UserLabel> window_labels(const std::vector<ingest::EventRecord>& records,
                                     const DatasetSpec& spec, int first_split);
std::vector<UserLabel> window_labels_dataflow(const std::vector<ingest::EventRecord>& records,
                                              const DatasetSpec& spec, int first_split,
                                              const dataflow::ExecOptions& opts);

// Joined (vector, label) rows for one window, -1 dropped, raw counts.
LabeledDataset build_window_dataset(const std::vector<ingest::EventRecord>& records,
                                    const DatasetSpec& spec, int first_split);
LabeledDataset build_window_dataset_dataflow(const std::vector<ingest::EventRecord>& records,
                                             const DatasetSpec& spec, int first_split,
                                             const dataflow::ExecOptions& opts);

// Train on window k, validate/test on window k+1 (50/50), both balanced;
// scaler fit on the balanced training set when normalize_features is on.
struct SplitTriple {
    int split_index = 0;
    int horizon_splits = 1;
    LabeledDataset train, valid, test;
    Scaler scaler;
    BalanceCounts train_counts, valtest_counts;
    bool normalized = true;
};

SplitTriple build_triple(const std::vector<ingest::EventRecord>& records,
                         const DatasetSpec& spec, int first_split, std::uint64_t seed,
                         bool normalize_features,
                         const dataflow::ExecOptions* engine = nullptr);

// ---- dataset files --------------------------------------------------------
// CSV: header user_id,f0..f{P-1},label. Doubles are written in shortest
// round-trip form.

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& dataset);
LabeledDataset read_dataset_csv(const std::filesystem::path& path);

void write_split_sidecar(const std::filesystem::path& path, const SplitTriple& triple,
                         const DatasetSpec& spec, std::uint64_t seed);
// Returns the scaler recorded in a sidecar (for eval-time reuse).
Scaler read_sidecar_scaler(const std::filesystem::path& path);

std::string format_double(double v);

} // namespace churn::features

#endif
