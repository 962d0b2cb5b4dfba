#include "churn/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "churn/errors.hpp"
#include "churn/rng.hpp"

namespace churn::features {

using ingest::EventRecord;

SplitSpec make_split(std::int64_t origin, int index, int split_length_days) {
    const std::int64_t len = static_cast<std::int64_t>(split_length_days) * kSecondsPerDay;
    return SplitSpec{index, origin + index * len, origin + (index + 1) * len, split_length_days};
}

void WindowSpec::validate() const {
    if (splits.empty()) throw DataError("window has no splits");
    if (periods < 1) throw DataError("window periods must be >= 1");
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i].end <= splits[i].start) throw DataError("split has non-positive span");
        if (i > 0 && splits[i].start != splits[i - 1].end)
            throw DataError("window splits are not contiguous");
    }
}

int assign_period(std::int64_t t, const WindowSpec& window) {
    const std::int64_t start = window.start();
    const std::int64_t end = window.end();
    if (t < start || t >= end) throw std::out_of_range("assign_period: time outside window");
    const std::int64_t span = end - start;
    std::int64_t idx = static_cast<std::int64_t>(window.periods) * (t - start) / span;
    if (idx >= window.periods) idx = window.periods - 1;
    return static_cast<int>(idx);
}

std::vector<UserEventVector> build_event_vectors(const std::vector<EventRecord>& records,
                                                 const WindowSpec& window) {
    window.validate();
    std::map<std::uint64_t, std::vector<std::uint32_t>> per_user;
    for (const EventRecord& r : records) {
        if (r.time < window.start() || r.time >= window.end()) continue;
        auto [it, fresh] = per_user.try_emplace(r.user_id);
        if (fresh) it->second.assign(static_cast<std::size_t>(window.periods), 0);
        ++it->second[static_cast<std::size_t>(assign_period(r.time, window))];
    }
    std::vector<UserEventVector> out;
    out.reserve(per_user.size());
    for (auto& [user, counts] : per_user) out.push_back({user, std::move(counts)});
    return out;
}

int label_from_span(std::int64_t first_event, std::int64_t last_event,
                    std::int64_t horizon_end, int inactivity_days) {
    const std::int64_t inactivity = static_cast<std::int64_t>(inactivity_days) * kSecondsPerDay;
    if (last_event - first_event < inactivity) return -1;
    if (horizon_end - last_event > inactivity) return 1;
    return 0;
}

int compute_churn_label(const std::vector<std::int64_t>& event_times,
                        std::int64_t horizon_end, int inactivity_days) {
    if (event_times.empty()) throw DataError("compute_churn_label: user has no events");
    const auto [first, last] = std::minmax_element(event_times.begin(), event_times.end());
    return label_from_span(*first, *last, horizon_end, inactivity_days);
}

LabeledDataset assemble_split_dataset(const std::vector<UserEventVector>& vectors,
                                      const std::vector<UserLabel>& labels,
                                      int split_index, int horizon_splits) {
    std::map<std::uint64_t, int> label_of;
    for (const UserLabel& l : labels)
        if (!label_of.emplace(l.user_id, l.label).second)
            throw DataError("assemble_split_dataset: duplicate user id in labels: " +
                            std::to_string(l.user_id));

    LabeledDataset out;
    out.split_index = split_index;
    out.horizon_splits = horizon_splits;
    std::uint64_t prev = 0;
    bool have_prev = false;
    for (const UserEventVector& v : vectors) {
        if (have_prev && v.user_id == prev)
            throw DataError("assemble_split_dataset: duplicate user id in vectors: " +
                            std::to_string(v.user_id));
        prev = v.user_id;
        have_prev = true;
        auto it = label_of.find(v.user_id);
        if (it == label_of.end()) continue; // registered after the window
        if (it->second == -1) continue;     // new user, filtered out
        Row row;
        row.user_id = v.user_id;
        row.features.assign(v.counts.begin(), v.counts.end());
        row.label = it->second;
        out.rows.push_back(std::move(row));
    }
    std::sort(out.rows.begin(), out.rows.end(),
              [](const Row& a, const Row& b) { return a.user_id < b.user_id; });
    if (!out.rows.empty()) out.periods = static_cast<int>(out.rows.front().features.size());
    return out;
}

Scaler fit_scaler(const LabeledDataset& dataset) {
    double max_count = 0.0;
    for (const Row& row : dataset.rows)
        for (double v : row.features) max_count = std::max(max_count, v);
    return Scaler{max_count > 0.0 ? max_count : 1.0};
}

void apply_scaler(LabeledDataset& dataset, const Scaler& scaler) {
    for (Row& row : dataset.rows)
        for (double& v : row.features) v = std::min(1.0, v / scaler.max_count);
}

Scaler normalize(LabeledDataset& dataset) {
    const Scaler scaler = fit_scaler(dataset);
    apply_scaler(dataset, scaler);
    return scaler;
}

LabeledDataset balance_undersample(const LabeledDataset& dataset, std::uint64_t seed,
                                   BalanceCounts* counts) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < dataset.rows.size(); ++i)
        (dataset.rows[i].label == 1 ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty())
        throw DataError("degenerate split " + std::to_string(dataset.split_index) +
                        ": a class has zero samples (pos=" + std::to_string(pos.size()) +
                        ", neg=" + std::to_string(neg.size()) + ")");

    Rng rng(seed);
    std::vector<std::size_t>& majority = pos.size() > neg.size() ? pos : neg;
    const std::size_t minority_count = std::min(pos.size(), neg.size());
    shuffle(majority, rng);
    majority.resize(minority_count);

    std::vector<std::size_t> keep;
    keep.reserve(2 * minority_count);
    keep.insert(keep.end(), pos.begin(), pos.end());
    keep.insert(keep.end(), neg.begin(), neg.end());
    std::sort(keep.begin(), keep.end());

    LabeledDataset out;
    out.split_index = dataset.split_index;
    out.horizon_splits = dataset.horizon_splits;
    out.periods = dataset.periods;
    out.rows.reserve(keep.size());
    for (std::size_t i : keep) out.rows.push_back(dataset.rows[i]);

    if (counts) {
        std::size_t pos_before = 0;
        for (const Row& r : dataset.rows) pos_before += r.label == 1 ? 1 : 0;
        counts->pos_before = pos_before;
        counts->neg_before = dataset.rows.size() - pos_before;
        counts->pos_after = minority_count;
        counts->neg_after = minority_count;
    }
    return out;
}

std::pair<LabeledDataset, LabeledDataset> split_val_test(const LabeledDataset& dataset,
                                                         std::uint64_t seed) {
    const std::size_t n = dataset.rows.size();
    if (n < 2) throw DataError("split_val_test: need at least 2 rows, got " + std::to_string(n));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    shuffle(idx, rng);

    const std::size_t n_valid = (n + 1) / 2;
    std::vector<std::size_t> valid_idx(idx.begin(), idx.begin() + n_valid);
    std::vector<std::size_t> test_idx(idx.begin() + n_valid, idx.end());
    std::sort(valid_idx.begin(), valid_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    auto take = [&](const std::vector<std::size_t>& which) {
        LabeledDataset part;
        part.split_index = dataset.split_index;
        part.horizon_splits = dataset.horizon_splits;
        part.periods = dataset.periods;
        part.rows.reserve(which.size());
        for (std::size_t i : which) part.rows.push_back(dataset.rows[i]);
        return part;
    };
    return {take(valid_idx), take(test_idx)};
}

WindowSpec window_of(const DatasetSpec& spec, int first_split) {
    WindowSpec window;
    window.periods = spec.periods;
    for (int i = 0; i < spec.window_splits; ++i)
        window.splits.push_back(make_split(spec.origin, first_split + i, spec.split_length_days));
    window.validate();
    return window;
}

std::int64_t horizon_end_of(const DatasetSpec& spec, int first_split) {
    const int last = first_split + spec.window_splits + spec.horizon_splits - 1;
    return make_split(spec.origin, last, spec.split_length_days).end;
}

int covered_splits(const DatasetSpec& spec, std::int64_t max_event_time) {
    if (max_event_time < spec.origin) return 0;
    // day granularity: dumps are daily files, so data reaching into a
    // split's last day covers that split
    const std::int64_t days = (max_event_time - spec.origin) / kSecondsPerDay + 1;
    return static_cast<int>(days / spec.split_length_days);
}

std::vector<EventRecord> scrape_dataflow(const std::vector<std::string>& lines,
                                         ingest::TimeUnit unit,
                                         const dataflow::ExecOptions& opts) {
    auto plan = dataflow::source(lines)
                    .map([unit](const std::string& line) { return ingest::parse_event_line(line, unit); })
                    .filter([](const std::optional<EventRecord>& r) { return r.has_value(); })
                    .map([](const std::optional<EventRecord>& r) { return *r; });
    return dataflow::execute(plan, opts);
}

namespace {

using Span = std::pair<std::int64_t, std::int64_t>; // (first, last)

dataflow::Plan<std::pair<std::uint64_t, Span>> span_plan(
    const dataflow::Plan<EventRecord>& records) {
    return dataflow::reduce_by_key(
        records.map([](const EventRecord& r) {
            return std::make_pair(r.user_id, Span{r.time, r.time});
        }),
        [](const Span& a, const Span& b) {
            return Span{std::min(a.first, b.first), std::max(a.second, b.second)};
        });
}

dataflow::Plan<EventRecord> in_range(const dataflow::Plan<EventRecord>& records,
                                     std::int64_t start, std::int64_t end) {
    return records.filter(
        [start, end](const EventRecord& r) { return r.time >= start && r.time < end; });
}

} // namespace

std::vector<UserLabel> window_labels(const std::vector<EventRecord>& records,
                                     const DatasetSpec& spec, int first_split) {
    const WindowSpec window = window_of(spec, first_split);
    const std::int64_t h_end = horizon_end_of(spec, first_split);
    std::map<std::uint64_t, Span> spans;
    for (const EventRecord& r : records) {
        if (r.time < window.start() || r.time >= h_end) continue;
        auto [it, fresh] = spans.try_emplace(r.user_id, Span{r.time, r.time});
        if (!fresh) {
            it->second.first = std::min(it->second.first, r.time);
            it->second.second = std::max(it->second.second, r.time);
        }
    }
    std::vector<UserLabel> out;
    out.reserve(spans.size());
    for (const auto& [user, span] : spans)
        out.push_back({user, label_from_span(span.first, span.second, h_end, spec.inactivity_days)});
    return out;
}

std::vector<UserLabel> window_labels_dataflow(const std::vector<EventRecord>& records,
                                              const DatasetSpec& spec, int first_split,
                                              const dataflow::ExecOptions& opts) {
    const WindowSpec window = window_of(spec, first_split);
    const std::int64_t h_end = horizon_end_of(spec, first_split);
    const int inactivity = spec.inactivity_days;
    auto plan = span_plan(in_range(dataflow::source(records), window.start(), h_end))
                    .map([h_end, inactivity](const std::pair<std::uint64_t, Span>& kv) {
                        return UserLabel{kv.first, label_from_span(kv.second.first,
                                                                   kv.second.second, h_end,
                                                                   inactivity)};
                    });
    return dataflow::execute(plan, opts);
}

LabeledDataset build_window_dataset(const std::vector<EventRecord>& records,
                                    const DatasetSpec& spec, int first_split) {
    const WindowSpec window = window_of(spec, first_split);
    return assemble_split_dataset(build_event_vectors(records, window),
                                  window_labels(records, spec, first_split), first_split,
                                  spec.horizon_splits);
}

LabeledDataset build_window_dataset_dataflow(const std::vector<EventRecord>& records,
                                             const DatasetSpec& spec, int first_split,
                                             const dataflow::ExecOptions& opts) {
    const WindowSpec window = window_of(spec, first_split);
    const std::int64_t h_end = horizon_end_of(spec, first_split);
    const int inactivity = spec.inactivity_days;
    const int periods = window.periods;

    auto scoped = in_range(dataflow::source(records), window.start(), h_end);

    auto vectors = dataflow::reduce_by_key(
        in_range(scoped, window.start(), window.end()).map([window](const EventRecord& r) {
            std::vector<std::uint32_t> counts(static_cast<std::size_t>(window.periods), 0);
            counts[static_cast<std::size_t>(assign_period(r.time, window))] = 1;
            return std::make_pair(r.user_id, counts);
        }),
        [](const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
            std::vector<std::uint32_t> sum(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) sum[i] = a[i] + b[i];
            return sum;
        });

    auto labels = span_plan(scoped).map(
        [h_end, inactivity](const std::pair<std::uint64_t, Span>& kv) {
            return std::make_pair(kv.first, label_from_span(kv.second.first, kv.second.second,
                                                            h_end, inactivity));
        });

    auto rows = dataflow::join(vectors, labels)
                    .filter([](const auto& kv) { return kv.second.second != -1; })
                    .map([](const auto& kv) {
                        Row row;
                        row.user_id = kv.first;
                        row.features.assign(kv.second.first.begin(), kv.second.first.end());
                        row.label = kv.second.second;
                        return row;
                    });

    LabeledDataset out;
    out.split_index = first_split;
    out.horizon_splits = spec.horizon_splits;
    out.periods = periods;
    out.rows = dataflow::execute(rows, opts);
    return out;
}

SplitTriple build_triple(const std::vector<EventRecord>& records, const DatasetSpec& spec,
                         int first_split, std::uint64_t seed, bool normalize_features,
                         const dataflow::ExecOptions* engine) {
    auto window_dataset = [&](int k) {
        return engine ? build_window_dataset_dataflow(records, spec, k, *engine)
                      : build_window_dataset(records, spec, k);
    };

    SplitTriple triple;
    triple.split_index = first_split;
    triple.horizon_splits = spec.horizon_splits;
    triple.normalized = normalize_features;

    LabeledDataset train_raw = window_dataset(first_split);
    LabeledDataset eval_raw = window_dataset(first_split + 1);

    triple.train = balance_undersample(train_raw, derive_seed(seed, "balance-train"),
                                       &triple.train_counts);
    LabeledDataset eval_balanced = balance_undersample(
        eval_raw, derive_seed(seed, "balance-valtest"), &triple.valtest_counts);

    triple.scaler = normalize_features ? fit_scaler(triple.train) : Scaler{1.0};
    if (normalize_features) {
        apply_scaler(triple.train, triple.scaler);
        apply_scaler(eval_balanced, triple.scaler);
    }
    auto [valid, test] = split_val_test(eval_balanced, derive_seed(seed, "valtest-split"));
    triple.valid = std::move(valid);
    triple.test = std::move(test);
    return triple;
}

std::string format_double(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) return "0";
    return std::string(buf, p);
}

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& dataset) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset: " + path.string());
    out << "user_id";
    for (int i = 0; i < dataset.periods; ++i) out << ",f" << i;
    out << ",label\n";
    for (const Row& row : dataset.rows) {
        out << row.user_id;
        for (double v : row.features) out << ',' << format_double(v);
        out << ',' << row.label << '\n';
    }
}

LabeledDataset read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read dataset: " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw DataError("empty dataset file: " + path.string());

    LabeledDataset dataset;
    dataset.periods = static_cast<int>(std::count(header.begin(), header.end(), ',')) - 1;
    if (dataset.periods < 1) throw DataError("malformed dataset header: " + path.string());

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Row row;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        auto next_field = [&](auto& value) {
            auto [ptr, ec] = std::from_chars(p, end, value);
            if (ec != std::errc()) throw DataError("malformed dataset row: " + path.string());
            p = ptr;
            if (p < end && *p == ',') ++p;
        };
        next_field(row.user_id);
        row.features.resize(static_cast<std::size_t>(dataset.periods));
        for (double& v : row.features) next_field(v);
        next_field(row.label);
        if (row.label != 0 && row.label != 1)
            throw DataError("dataset label outside {0,1}: " + path.string());
        dataset.rows.push_back(std::move(row));
    }
    return dataset;
}

void write_split_sidecar(const std::filesystem::path& path, const SplitTriple& triple,
                         const DatasetSpec& spec, std::uint64_t seed) {
    const WindowSpec train_window = window_of(spec, triple.split_index);
    const WindowSpec eval_window = window_of(spec, triple.split_index + 1);
    nlohmann::json meta{
        {"format", "churn-split/1"},
        {"split_index", triple.split_index},
        {"periods", spec.periods},
        {"split_length_days", spec.split_length_days},
        {"window_splits", spec.window_splits},
        {"horizon_splits", spec.horizon_splits},
        {"inactivity_days", spec.inactivity_days},
        {"origin", spec.origin},
        {"seed", seed},
        {"normalized", triple.normalized},
        {"scaler_max_count", triple.scaler.max_count},
        {"train_window", {{"start", train_window.start()}, {"end", train_window.end()}}},
        {"train_horizon_end", horizon_end_of(spec, triple.split_index)},
        {"eval_window", {{"start", eval_window.start()}, {"end", eval_window.end()}}},
        {"eval_horizon_end", horizon_end_of(spec, triple.split_index + 1)},
        {"class_counts",
         {{"train",
           {{"pos_before", triple.train_counts.pos_before},
            {"neg_before", triple.train_counts.neg_before},
            {"pos_after", triple.train_counts.pos_after},
            {"neg_after", triple.train_counts.neg_after}}},
          {"valtest",
           {{"pos_before", triple.valtest_counts.pos_before},
            {"neg_before", triple.valtest_counts.neg_before},
            {"pos_after", triple.valtest_counts.pos_after},
            {"neg_after", triple.valtest_counts.neg_after}}}}}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write sidecar: " + path.string());
    out << meta.dump(2) << '\n';
}

Scaler read_sidecar_scaler(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read sidecar: " + path.string());
    nlohmann::json meta = nlohmann::json::parse(in, nullptr, false);
    if (meta.is_discarded() || !meta.contains("scaler_max_count"))
        throw DataError("malformed sidecar: " + path.string());
    return Scaler{meta["scaler_max_count"].get<double>()};
}

} // namespace churn::features
