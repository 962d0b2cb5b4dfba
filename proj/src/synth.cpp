#include "churn/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>
#include <omp.h>

#include "churn/errors.hpp"
#include "churn/linalg.hpp"
#include "churn/network.hpp"
#include "churn/rng.hpp"

namespace churn::synth {

using features::kSecondsPerDay;

Regime regime_from_name(const std::string& name) {
    if (name == "subscription") return Regime::subscription;
    if (name == "nonsubscription") return Regime::nonsubscription;
    throw DataError("unknown regime: " + name);
}

std::string regime_name(Regime r) {
    return r == Regime::subscription ? "subscription" : "nonsubscription";
}

void SynthConfig::validate() const {
    if (days <= 0) throw DataError("synth: days must be positive");
    if (churn_fraction <= 0.0 || churn_fraction >= 1.0)
        throw DataError("synth: churn fraction must be in (0, 1)");
    if (base_daily_rate <= 0.0) throw DataError("synth: base daily rate must be positive");
    if (decay_factor <= 0.0 || decay_factor >= 1.0)
        throw DataError("synth: decay factor must be in (0, 1)");
    if (nonuser_fraction < 0.0 || nonuser_fraction > 0.5)
        throw DataError("synth: nonuser fraction must be in [0, 0.5]");
    if (split_length_days <= 0 || window_splits <= 0 || horizon_splits <= 0)
        throw DataError("synth: split geometry must be positive");
}

features::DatasetSpec SynthConfig::dataset_spec(int periods) const {
    features::DatasetSpec spec;
    spec.origin = origin;
    spec.split_length_days = split_length_days;
    spec.window_splits = window_splits;
    spec.horizon_splits = horizon_splits;
    spec.periods = periods;
    return spec;
}

namespace {

struct UserEvent {
    std::int64_t time = 0;
    std::uint64_t user_id = 0;
    std::uint8_t event_kind = 0;
};

const char* const kEventNames[] = {"login", "page_view", "click", "purchase", "logout"};
constexpr std::size_t kEventNameCount = sizeof(kEventNames) / sizeof(kEventNames[0]);

constexpr int kDecayDays = 14;       // pre-churn fade length
constexpr double kLateUserShare = 0.08;

// nonsubscription burst behaviour: burst starts form a Poisson process
// (exponential inter-burst gaps, memoryless), so the time to the next
// burst is independent of everything visible inside an input window and
// the 30-day rule labels are near-unpredictable by construction.
constexpr double kBurstGapMeanDays = 14.0;
constexpr int kBurstGapCap = 150;

void emit_day(Rng& rng, std::vector<UserEvent>& out, std::uint64_t user_id, std::int64_t origin,
              int day, double rate) {
    const std::uint64_t n = rng.poisson(rate);
    for (std::uint64_t i = 0; i < n; ++i) {
        const std::int64_t t =
            origin + static_cast<std::int64_t>(day) * kSecondsPerDay +
            static_cast<std::int64_t>(rng.uniform_int(kSecondsPerDay));
        out.push_back({t, user_id, static_cast<std::uint8_t>(rng.uniform_int(kEventNameCount))});
    }
}

std::vector<UserEvent> subscription_user(Rng& rng, std::uint64_t user_id,
                                         const SynthConfig& cfg) {
    std::vector<UserEvent> events;
    const bool late = rng.bernoulli(kLateUserShare);
    const int reg_day = late ? static_cast<int>(rng.uniform_int(
                                   std::max(1, cfg.days - 10 - (6 * cfg.days) / 10)) +
                               (6 * cfg.days) / 10)
                             : static_cast<int>(rng.uniform_int(6));
    const double rate = cfg.base_daily_rate * rng.uniform(0.6, 1.6);

    int cutoff = cfg.days; // beyond the range = never churns
    if (!late && rng.bernoulli(cfg.churn_fraction)) {
        const int lo = reg_day + 40;
        const int hi = cfg.days - 32;
        if (hi > lo) {
            // keep the cutoff away from split edges so the 30-day rule is
            // never borderline at any horizon end
            for (int attempt = 0; attempt < 64; ++attempt) {
                const int c = lo + static_cast<int>(rng.uniform_int(
                                       static_cast<std::uint64_t>(hi - lo)));
                const int r = c % cfg.split_length_days;
                if (r >= 3 && r <= cfg.split_length_days - 3) {
                    cutoff = c;
                    break;
                }
            }
        }
    }

    for (int day = reg_day; day < cfg.days; ++day) {
        if (day >= cutoff) break;
        double day_rate = rate;
        const int fade_start = cutoff - kDecayDays;
        if (day >= fade_start)
            day_rate = rate * std::pow(cfg.decay_factor, day - fade_start + 1);
        emit_day(rng, events, user_id, cfg.origin, day, day_rate);
    }
    return events;
}

std::vector<UserEvent> nonsubscription_user(Rng& rng, std::uint64_t user_id,
                                            const SynthConfig& cfg) {
    std::vector<UserEvent> events;
    const int reg_day = static_cast<int>(rng.uniform_int(11));

    auto exp_gap = [&rng] {
        const double draw = -kBurstGapMeanDays * std::log(1.0 - rng.uniform());
        return 1 + std::min(kBurstGapCap, static_cast<int>(draw));
    };

    int day = reg_day + exp_gap() - 1;
    while (day < cfg.days) {
        const int burst_len = 1 + static_cast<int>(rng.uniform_int(2));
        const double burst_rate = rng.uniform(1.0, 4.0); // per burst, not per user
        for (int d = std::max(day, reg_day); d < std::min(day + burst_len, cfg.days); ++d)
            emit_day(rng, events, user_id, cfg.origin, d, burst_rate);
        day += burst_len + exp_gap();
    }
    return events;
}

std::string event_json(std::int64_t time, const std::string& distinct_id, std::uint8_t kind,
                       bool include_id) {
    nlohmann::json props;
    if (include_id) props["distinct_id"] = distinct_id;
    props["time"] = time;
    nlohmann::json obj{{"event", kEventNames[kind]}, {"properties", std::move(props)}};
    return obj.dump();
}

} // namespace

GeneratedLog generate_log(const SynthConfig& cfg) {
    cfg.validate();

    // per-user streams derive from the master seed, so user generation is
    // order-independent and parallel
    std::vector<std::vector<UserEvent>> per_user(cfg.n_users);
    const std::uint64_t user_base = derive_seed(cfg.seed, "user");
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t u = 0; u < static_cast<std::ptrdiff_t>(cfg.n_users); ++u) {
        Rng rng(derive_seed(user_base, static_cast<std::uint64_t>(u)));
        const std::uint64_t user_id = 1000 + static_cast<std::uint64_t>(u);
        per_user[static_cast<std::size_t>(u)] =
            cfg.regime == Regime::subscription ? subscription_user(rng, user_id, cfg)
                                               : nonsubscription_user(rng, user_id, cfg);
    }

    // ground truth: the 30-day rule applied to the generated timelines of
    // the first window + horizon
    const features::DatasetSpec spec = cfg.dataset_spec();
    const std::int64_t win_start = spec.origin;
    const std::int64_t h_end = features::horizon_end_of(spec, 0);
    GeneratedLog log;
    for (const auto& events : per_user) {
        if (events.empty()) continue;
        std::int64_t first = 0, last = 0;
        bool seen = false;
        for (const UserEvent& e : events) {
            if (e.time < win_start || e.time >= h_end) continue;
            if (!seen) {
                first = last = e.time;
                seen = true;
            } else {
                first = std::min(first, e.time);
                last = std::max(last, e.time);
            }
        }
        if (seen)
            log.ground_truth.push_back(
                {events.front().user_id,
                 features::label_from_span(first, last, h_end, spec.inactivity_days)});
    }
    std::sort(log.ground_truth.begin(), log.ground_truth.end());

    // every feasible window must keep both classes, otherwise dataset
    // balancing downstream is impossible (the split-8 failure mode)
    const int total_splits = cfg.days / cfg.split_length_days;
    const int n_windows =
        cfg.n_users == 0 ? 0 : total_splits - cfg.window_splits - cfg.horizon_splits + 1;
    for (int k = 0; k < n_windows; ++k) {
        const std::int64_t ws = features::window_of(spec, k).start();
        const std::int64_t he = features::horizon_end_of(spec, k);
        std::size_t churned = 0, active = 0;
        for (const auto& events : per_user) {
            std::int64_t first = 0, last = 0;
            bool seen = false;
            for (const UserEvent& e : events) {
                if (e.time < ws || e.time >= he) continue;
                if (!seen) {
                    first = last = e.time;
                    seen = true;
                } else {
                    first = std::min(first, e.time);
                    last = std::max(last, e.time);
                }
            }
            if (!seen) continue;
            const int label = features::label_from_span(first, last, he, spec.inactivity_days);
            if (label == 1) ++churned;
            if (label == 0) ++active;
        }
        if (churned == 0 || active == 0)
            throw DataError("synth: window " + std::to_string(k) +
                            " has a class with zero users (churned=" + std::to_string(churned) +
                            ", active=" + std::to_string(active) + ")");
    }

    // merge into day files, time-ordered within each day
    std::vector<std::vector<UserEvent>> days(static_cast<std::size_t>(cfg.days));
    for (const auto& events : per_user)
        for (const UserEvent& e : events) {
            const std::size_t day =
                static_cast<std::size_t>((e.time - cfg.origin) / kSecondsPerDay);
            days[day].push_back(e);
        }

    log.day_lines.resize(days.size());
    Rng noise_rng(derive_seed(cfg.seed, "noise"));
    for (std::size_t day = 0; day < days.size(); ++day) {
        auto& events = days[day];
        std::sort(events.begin(), events.end(), [](const UserEvent& a, const UserEvent& b) {
            return std::tie(a.time, a.user_id, a.event_kind) <
                   std::tie(b.time, b.user_id, b.event_kind);
        });
        auto& lines = log.day_lines[day];
        lines.reserve(events.size());
        for (const UserEvent& e : events)
            lines.push_back(event_json(e.time, std::to_string(e.user_id), e.event_kind, true));

        // anonymous cookies and non-user events, spliced in at random spots
        const std::size_t n_noise = static_cast<std::size_t>(
            cfg.nonuser_fraction * static_cast<double>(events.size()));
        for (std::size_t i = 0; i < n_noise; ++i) {
            const std::int64_t t =
                cfg.origin + static_cast<std::int64_t>(day) * kSecondsPerDay +
                static_cast<std::int64_t>(noise_rng.uniform_int(kSecondsPerDay));
            const auto kind = static_cast<std::uint8_t>(noise_rng.uniform_int(kEventNameCount));
            std::string line;
            if (noise_rng.bernoulli(0.5)) {
                char cookie[32];
                std::snprintf(cookie, sizeof cookie, "anon-%016llx",
                              static_cast<unsigned long long>(noise_rng.next_u64()));
                line = event_json(t, cookie, kind, true);
            } else {
                line = event_json(t, "", kind, false); // no distinct_id at all
            }
            const std::size_t at = static_cast<std::size_t>(
                noise_rng.uniform_int(lines.size() + 1));
            lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(at), std::move(line));
        }
    }
    return log;
}

void write_log(const std::filesystem::path& dir, const GeneratedLog& log) {
    std::filesystem::create_directories(dir);
    for (std::size_t day = 0; day < log.day_lines.size(); ++day) {
        char name[32];
        std::snprintf(name, sizeof name, "raw-dump-%03zu.jsonl", day);
        std::ofstream out(dir / name);
        if (!out) throw DataError("cannot write raw dump: " + (dir / name).string());
        for (const std::string& line : log.day_lines[day]) out << line << '\n';
    }
    std::ofstream truth(dir / "ground_truth.csv");
    if (!truth) throw DataError("cannot write ground truth: " + (dir / "ground_truth.csv").string());
    truth << "user_id,label\n";
    for (const auto& [user, label] : log.ground_truth) truth << user << ',' << label << '\n';
}

std::vector<features::UserLabel> read_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read ground truth: " + path.string());
    std::string line;
    std::getline(in, line); // header
    std::vector<features::UserLabel> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        features::UserLabel l;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        auto r1 = std::from_chars(p, end, l.user_id);
        if (r1.ec != std::errc() || r1.ptr >= end || *r1.ptr != ',')
            throw DataError("malformed ground truth row: " + path.string());
        auto r2 = std::from_chars(r1.ptr + 1, end, l.label);
        if (r2.ec != std::errc()) throw DataError("malformed ground truth row: " + path.string());
        out.push_back(l);
    }
    return out;
}

double verify_separability(const features::LabeledDataset& dataset, std::uint64_t seed) {
    if (dataset.rows.size() < 4) throw DataError("verify_separability: dataset too small");

    std::vector<std::size_t> idx(dataset.rows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(derive_seed(seed, "probe-split"));
    shuffle(idx, rng);
    const std::size_t n_train = idx.size() / 2;

    const std::size_t dim = dataset.rows.front().features.size();
    Matrix x_train(n_train, dim), x_test(idx.size() - n_train, dim);
    std::vector<int> y_train(n_train), y_test(idx.size() - n_train);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const features::Row& row = dataset.rows[idx[i]];
        if (i < n_train) {
            for (std::size_t j = 0; j < dim; ++j) x_train(i, j) = row.features[j];
            y_train[i] = row.label;
        } else {
            for (std::size_t j = 0; j < dim; ++j) x_test(i - n_train, j) = row.features[j];
            y_test[i - n_train] = row.label;
        }
    }

    // full-batch softmax regression
    Matrix w(dim, 2);
    std::vector<double> bias(2, 0.0);
    Matrix z;
    for (int iter = 0; iter < 400; ++iter) {
        linalg::matmul(x_train, w, z);
        linalg::add_row_inplace(z, bias);
        network::softmax_rows_inplace(z);
        for (std::size_t i = 0; i < n_train; ++i) z(i, static_cast<std::size_t>(y_train[i])) -= 1.0;
        const double inv_m = 1.0 / static_cast<double>(n_train);
        for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] *= inv_m;
        Matrix grad;
        linalg::matmul_at_b(x_train, z, grad);
        const std::vector<double> grad_bias = linalg::column_sums(z);
        constexpr double lr = 0.5;
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] -= lr * grad.data()[i];
        for (std::size_t j = 0; j < 2; ++j) bias[j] -= lr * grad_bias[j];
    }

    linalg::matmul(x_test, w, z);
    linalg::add_row_inplace(z, bias);
    std::size_t hit[2] = {0, 0}, total[2] = {0, 0};
    for (std::size_t i = 0; i < y_test.size(); ++i) {
        const int pred = z(i, 1) > z(i, 0) ? 1 : 0;
        ++total[static_cast<std::size_t>(y_test[i])];
        if (pred == y_test[i]) ++hit[static_cast<std::size_t>(y_test[i])];
    }
    if (total[0] == 0 || total[1] == 0)
        return static_cast<double>(hit[0] + hit[1]) / static_cast<double>(y_test.size());
    return 0.5 * (static_cast<double>(hit[0]) / static_cast<double>(total[0]) +
                  static_cast<double>(hit[1]) / static_cast<double>(total[1]));
}

} // namespace churn::synth
