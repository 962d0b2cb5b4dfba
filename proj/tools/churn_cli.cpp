// Command-line entry point: synthesize event logs, build datasets, train,
// sweep and evaluate the churn classifier.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.

#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "churn/errors.hpp"
#include "churn/eval.hpp"
#include "churn/features.hpp"
#include "churn/ingest.hpp"
#include "churn/network.hpp"
#include "churn/synth.hpp"
#include "churn/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
    return buf;
}

// run directories are named by timestamp + seed; outputs inside them are
// seed-deterministic, the directory name is not
fs::path make_run_dir(const std::string& out, const std::string& run_dir, std::uint64_t seed) {
    if (!run_dir.empty()) {
        fs::create_directories(run_dir);
        return run_dir;
    }
    const fs::path base(out.empty() ? "." : out);
    fs::path dir = base / ("run-" + utc_timestamp() + "-seed" + std::to_string(seed));
    for (int i = 2; fs::exists(dir); ++i)
        dir = base / ("run-" + utc_timestamp() + "-seed" + std::to_string(seed) + "-" +
                      std::to_string(i));
    fs::create_directories(dir);
    return dir;
}

struct ManifestScope {
    json doc;
    fs::path path;

    ManifestScope(const std::string& command, CLI::App* sub, const fs::path& dir) {
        doc["tool"] = "churn";
        doc["version"] = kVersion;
        doc["command"] = command;
        doc["config"] = sub->config_to_str(true, false);
        doc["started_at"] = utc_timestamp();
        path = dir / "manifest.json";
    }

    void add_input(const std::string& p) { doc["inputs"].push_back(p); }
    void add_output(const std::string& p) { doc["outputs"].push_back(p); }

    void write() {
        doc["finished_at"] = utc_timestamp();
        std::ofstream out(path);
        if (!out) throw churn::DataError("cannot write manifest: " + path.string());
        out << doc.dump(2) << '\n';
    }
};

std::vector<fs::path> resolve_raw_dumps(const std::vector<std::string>& args) {
    std::vector<fs::path> paths;
    for (const std::string& arg : args) {
        if (fs::is_directory(arg)) {
            auto found = churn::ingest::list_raw_dumps(arg);
            paths.insert(paths.end(), found.begin(), found.end());
        } else {
            paths.emplace_back(arg);
        }
    }
    if (paths.empty()) throw churn::DataError("no raw-dump files found");
    return paths;
}

int cmd_synth(CLI::App* sub, const churn::synth::SynthConfig& cfg, const std::string& out_dir) {
    churn::synth::GeneratedLog log = churn::synth::generate_log(cfg);
    fs::create_directories(out_dir);
    ManifestScope manifest("synth", sub, out_dir);
    churn::synth::write_log(out_dir, log);
    for (std::size_t day = 0; day < log.day_lines.size(); ++day)
        manifest.add_output((fs::path(out_dir) / ("raw-dump-" + std::to_string(day) + ".jsonl"))
                                .string());
    manifest.add_output((fs::path(out_dir) / "ground_truth.csv").string());
    manifest.doc["origin"] = cfg.origin;
    manifest.write();

    std::size_t events = 0;
    for (const auto& day : log.day_lines) events += day.size();
    std::cout << "synth: " << cfg.n_users << " users, " << cfg.days << " days, " << events
              << " lines, regime " << churn::synth::regime_name(cfg.regime) << "\n"
              << "synth: wrote " << log.day_lines.size() << " day files under " << out_dir
              << "\n";
    return 0;
}

int cmd_build(CLI::App* sub, const std::vector<std::string>& raw_args, const std::string& out_dir,
              churn::features::DatasetSpec spec, bool origin_given, std::uint64_t seed,
              bool normalize, const std::string& time_unit, std::size_t workers,
              std::size_t partitions) {
    using namespace churn;

    const auto unit = time_unit == "millis" ? ingest::TimeUnit::millis : ingest::TimeUnit::seconds;
    const auto paths = resolve_raw_dumps(raw_args);
    const dataflow::ExecOptions opts{workers, partitions};

    // scrape per file on the engine; per-file statistics from line counts
    std::vector<ingest::EventRecord> records;
    std::cout << "file,lines,parsed,skipped\n";
    for (const fs::path& path : paths) {
        const auto lines = ingest::read_lines({path});
        auto file_records = features::scrape_dataflow(lines, unit, opts);
        std::cout << path.filename().string() << ',' << lines.size() << ','
                  << file_records.size() << ',' << lines.size() - file_records.size() << '\n';
        records.insert(records.end(), file_records.begin(), file_records.end());
    }
    if (records.empty()) throw DataError("no registered-user events in raw dumps");

    std::int64_t min_time = records.front().time, max_time = records.front().time;
    for (const auto& r : records) {
        min_time = std::min(min_time, r.time);
        max_time = std::max(max_time, r.time);
    }
    if (!origin_given) spec.origin = min_time;

    const int n_splits = features::covered_splits(spec, max_time);
    const int n_triples = n_splits - spec.window_splits - spec.horizon_splits;
    if (n_triples < 1)
        throw DataError("not enough data: " + std::to_string(n_splits) + " covered splits, need " +
                        std::to_string(spec.window_splits + spec.horizon_splits + 1) +
                        " for one train/valid/test triple");

    fs::create_directories(out_dir);
    ManifestScope manifest("build", sub, out_dir);
    for (const auto& p : paths) manifest.add_input(p.string());
    manifest.doc["origin"] = spec.origin;
    manifest.doc["covered_splits"] = n_splits;

    for (int k = 0; k < n_triples; ++k) {
        const std::uint64_t triple_seed = derive_seed(derive_seed(seed, "triple"), k);
        features::SplitTriple triple =
            features::build_triple(records, spec, k, triple_seed, normalize, &opts);

        const fs::path dir = fs::path(out_dir) / ("split_" + std::to_string(k));
        fs::create_directories(dir);
        features::write_dataset_csv(dir / "train.csv", triple.train);
        features::write_dataset_csv(dir / "valid.csv", triple.valid);
        features::write_dataset_csv(dir / "test.csv", triple.test);
        features::write_split_sidecar(dir / "meta.json", triple, spec, triple_seed);
        for (const char* name : {"train.csv", "valid.csv", "test.csv", "meta.json"})
            manifest.add_output((dir / name).string());

        std::cout << "split " << k << ": train " << triple.train_counts.pos_before << "+/"
                  << triple.train_counts.neg_before << "- -> " << triple.train_counts.pos_after
                  << "+/" << triple.train_counts.neg_after << "-, valtest "
                  << triple.valtest_counts.pos_before << "+/" << triple.valtest_counts.neg_before
                  << "- -> " << triple.valtest_counts.pos_after << "+/"
                  << triple.valtest_counts.neg_after << "-\n";
    }
    manifest.write();
    std::cout << "build: wrote " << n_triples << " split datasets under " << out_dir << "\n";
    return 0;
}

churn::eval::SplitDatasets load_split_dir(const fs::path& dir) {
    churn::eval::SplitDatasets data;
    data.train = churn::features::read_dataset_csv(dir / "train.csv");
    data.valid = churn::features::read_dataset_csv(dir / "valid.csv");
    data.test = churn::features::read_dataset_csv(dir / "test.csv");

    std::ifstream meta_in(dir / "meta.json");
    if (meta_in) {
        const json meta = json::parse(meta_in, nullptr, false);
        if (!meta.is_discarded()) {
            data.split_index = meta.value("split_index", 0);
            data.horizon_splits = meta.value("horizon_splits", 1);
        }
    }
    return data;
}

int cmd_train(CLI::App* sub, const std::string& data_dir, const std::string& variant_name,
              int layers, churn::network::Architecture base_arch,
              churn::training::TrainConfig base_cfg, std::uint64_t seed, const std::string& out,
              const std::string& run_dir) {
    using namespace churn;

    const eval::SplitDatasets data = load_split_dir(data_dir);
    if (data.train.rows.empty()) throw DataError("empty training set in " + data_dir);
    const int periods = static_cast<int>(data.train.rows.front().features.size());

    base_cfg.seed = derive_seed(seed, "train");
    eval::VariantSetup setup = eval::make_variant(eval::variant_from_name(variant_name), layers,
                                                  periods, base_arch, base_cfg);

    const fs::path dir = make_run_dir(out, run_dir, seed);
    ManifestScope manifest("train", sub, dir);
    manifest.add_input(data_dir);

    network::Network net = network::init_network(setup.arch, derive_seed(setup.config.seed, "init"));
    const training::TrainResult result =
        training::train(std::move(net), data.train, data.valid, setup.config);

    network::save_model(dir / "model.json", result.best);
    training::write_training_log(dir / "training_log.csv", result.state);
    manifest.add_output((dir / "model.json").string());
    manifest.add_output((dir / "training_log.csv").string());
    manifest.write();

    for (const std::string& warning : result.state.warnings)
        std::cerr << "warning: " << warning << "\n";
    std::cout << "train: " << result.state.epoch << " epochs, best validation error "
              << features::format_double(result.state.best_valid_error) << "\n"
              << "train: model written to " << (dir / "model.json").string() << "\n";
    return 0;
}

int cmd_sweep(CLI::App* sub, const std::string& data_dir, churn::eval::SweepGrid grid,
              const std::vector<std::string>& variant_names, std::size_t seeds_per_cell,
              churn::network::Architecture base_arch, churn::training::TrainConfig base_cfg,
              std::uint64_t seed, std::size_t workers, const std::string& out,
              const std::string& run_dir) {
    using namespace churn;

    grid.variants.clear();
    for (const std::string& name : variant_names)
        grid.variants.push_back(eval::variant_from_name(name));
    grid.seeds.clear();
    for (std::size_t i = 1; i <= seeds_per_cell; ++i) grid.seeds.push_back(i);
    grid.base_seed = seed;

    std::vector<eval::SplitDatasets> datasets;
    std::vector<fs::path> split_dirs;
    for (const auto& entry : fs::directory_iterator(data_dir))
        if (entry.is_directory() && entry.path().filename().string().starts_with("split_"))
            split_dirs.push_back(entry.path());
    std::sort(split_dirs.begin(), split_dirs.end());
    for (const fs::path& dir : split_dirs) datasets.push_back(load_split_dir(dir));
    if (datasets.empty()) throw DataError("no split_* dataset directories under " + data_dir);

    const fs::path dir = make_run_dir(out, run_dir, seed);
    ManifestScope manifest("sweep", sub, dir);
    manifest.add_input(data_dir);

    const eval::SweepResult result = eval::run_sweep(datasets, grid, base_arch, base_cfg, workers);
    const std::vector<eval::SummaryRow> summary = eval::summarize(result);

    eval::write_cells_csv(dir / "cells.csv", result);
    eval::write_summary_csv(dir / "summary.csv", summary);
    manifest.add_output((dir / "cells.csv").string());
    manifest.add_output((dir / "summary.csv").string());
    manifest.write();

    std::size_t failures = 0;
    for (const auto& cell : result.cells) failures += cell.failure.empty() ? 0 : 1;
    std::cout << "sweep: " << result.cells.size() << " cells (" << failures << " failed)\n";
    for (const auto& row : summary)
        std::cout << "  split " << row.split << ' ' << eval::variant_name(row.variant)
                  << ": min " << features::format_double(row.min) << " median "
                  << features::format_double(row.median) << " max "
                  << features::format_double(row.max) << "\n";
    std::cout << "sweep: results under " << dir.string() << "\n";
    return 0;
}

int cmd_eval(CLI::App* sub, const std::string& model_path, const std::string& test_path,
             const std::string& out, const std::string& run_dir) {
    using namespace churn;

    const network::Network net = network::load_model(model_path);
    const features::LabeledDataset test = features::read_dataset_csv(test_path);
    if (test.rows.empty()) throw DataError("empty test set: " + test_path);

    const Matrix x = training::dataset_features(test);
    const double error =
        eval::zero_one_loss(network::predict(net, x), training::dataset_labels(test));
    const double accuracy = (1.0 - error) * 100.0;

    const fs::path dir = make_run_dir(out, run_dir, 0);
    ManifestScope manifest("eval", sub, dir);
    manifest.add_input(model_path);
    manifest.add_input(test_path);

    json report{{"model", model_path},
                {"test", test_path},
                {"rows", test.rows.size()},
                {"zero_one_error", error},
                {"accuracy_percent", accuracy}};
    std::ofstream report_out(dir / "eval.json");
    report_out << report.dump(2) << '\n';
    manifest.add_output((dir / "eval.json").string());
    manifest.write();

    std::cout << "eval: zero-one error " << features::format_double(error) << " (accuracy "
              << features::format_double(accuracy) << "%) on " << test.rows.size() << " rows\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"churn: company-independent churn prediction on event logs"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // flat key=value config files, one per subcommand
    auto with_config = [](CLI::App* sub) {
        sub->set_config("--config", "", "read flags from a key=value file");
        return sub;
    };

    // ---- synth ----
    auto* synth =
        with_config(app.add_subcommand("synth", "generate synthetic raw-dump event logs"));
    churn::synth::SynthConfig synth_cfg;
    std::string synth_out, synth_regime = "subscription";
    synth->add_option("--users", synth_cfg.n_users, "number of users");
    synth->add_option("--days", synth_cfg.days, "days of logs");
    synth->add_option("--churn-fraction", synth_cfg.churn_fraction, "fraction of churning users");
    synth->add_option("--regime", synth_regime, "subscription|nonsubscription");
    synth->add_option("--rate", synth_cfg.base_daily_rate, "base daily event rate");
    synth->add_option("--decay", synth_cfg.decay_factor, "pre-churn daily rate decay");
    synth->add_option("--nonuser-fraction", synth_cfg.nonuser_fraction,
                      "share of anonymous/non-user lines");
    synth->add_option("--origin", synth_cfg.origin, "unix time of day 0");
    synth->add_option("--split-days", synth_cfg.split_length_days, "split length in days");
    synth->add_option("--window-splits", synth_cfg.window_splits, "input window length in splits");
    synth->add_option("--horizon-splits", synth_cfg.horizon_splits, "churn horizon in splits");
    synth->add_option("--seed", synth_cfg.seed, "master seed")->required();
    synth->add_option("--out", synth_out, "output directory")->required();

    // ---- build ----
    auto* build = with_config(
        app.add_subcommand("build", "build train/valid/test datasets from raw dumps"));
    std::vector<std::string> build_raw;
    std::string build_out, build_time_unit = "seconds";
    churn::features::DatasetSpec build_spec;
    std::uint64_t build_seed = 0;
    bool build_normalize = true;
    std::size_t build_workers = 2, build_partitions = 8;
    CLI::Option* origin_opt = build->add_option("--start", build_spec.origin,
                                                "unix time of split 0 (default: first event)");
    build->add_option("--raw-dump", build_raw, "raw-dump files or directories")->required();
    build->add_option("--out", build_out, "output directory")->required();
    build->add_option("--split-days", build_spec.split_length_days, "split length in days");
    build->add_option("--window-splits", build_spec.window_splits, "input window length in splits");
    build->add_option("--horizon-splits", build_spec.horizon_splits, "churn horizon in splits");
    build->add_option("--periods", build_spec.periods, "periods per input window");
    build->add_option("--inactivity-days", build_spec.inactivity_days, "churn inactivity threshold");
    build->add_option("--time-unit", build_time_unit, "raw-dump timestamp unit: seconds|millis");
    build->add_option("--workers", build_workers, "dataflow worker threads");
    build->add_option("--partitions", build_partitions, "dataflow partitions");
    build->add_flag("--normalize,!--no-normalize", build_normalize,
                    "scale features into [0,1] by the training max");
    build->add_option("--seed", build_seed, "master seed")->required();

    // ---- shared train/sweep knobs ----
    churn::network::Architecture base_arch;
    base_arch.l1_lambda = 0.0001;
    base_arch.l2_lambda = 0.0001;
    churn::training::TrainConfig base_cfg;

    // ---- train ----
    auto* train = with_config(
        app.add_subcommand("train", "train one classifier on a split dataset"));
    std::string train_data, train_variant = "proposed", train_out = ".", train_run_dir;
    int train_layers = 4;
    std::uint64_t train_seed = 0;
    train->add_option("--data", train_data, "split dataset directory (train/valid/test.csv)")
        ->required();
    train->add_option("--variant", train_variant, "simple|proposed");
    train->add_option("--layers", train_layers, "total layers (input+hidden+output)");
    train->add_option("--lr", base_cfg.learning_rate, "learning rate");
    train->add_option("--momentum", base_cfg.momentum_init, "initial momentum");
    train->add_option("--lr-decay", base_cfg.lr_decay, "learning-rate decay per epoch");
    train->add_option("--batch-size", base_cfg.batch_size, "mini-batch size");
    train->add_option("--max-epochs", base_cfg.max_epochs, "epoch cap");
    train->add_option("--patience", base_cfg.patience, "early-stopping patience");
    train->add_option("--keep-p", base_arch.dropout_keep_p, "dropout keep probability");
    train->add_option("--l1", base_arch.l1_lambda, "L1 constant (softmax layer)");
    train->add_option("--l2", base_arch.l2_lambda, "L2 constant (softmax layer)");
    train->add_option("--seed", train_seed, "master seed")->required();
    train->add_option("--out", train_out, "parent of the run directory");
    train->add_option("--run-dir", train_run_dir, "exact run directory (overrides --out)");

    // ---- sweep ----
    auto* sweep = with_config(
        app.add_subcommand("sweep", "learning-rate x depth sweep over split datasets"));
    churn::eval::SweepGrid grid;
    std::string sweep_data, sweep_out = ".", sweep_run_dir;
    std::vector<std::string> sweep_variants = {"simple", "proposed"};
    std::size_t sweep_seeds = 3, sweep_workers = 2;
    std::uint64_t sweep_seed = 0;
    sweep->add_option("--data", sweep_data, "build output directory (split_* inside)")->required();
    sweep->add_option("--lrs", grid.learning_rates, "learning rates")->delimiter(',');
    sweep->add_option("--layers", grid.total_layers, "total layer counts")->delimiter(',');
    sweep->add_option("--variants", sweep_variants, "variants to sweep")->delimiter(',');
    sweep->add_option("--seeds-per-cell", sweep_seeds, "seeds per grid cell");
    sweep->add_option("--workers", sweep_workers, "parallel training workers");
    sweep->add_option("--batch-size", base_cfg.batch_size, "mini-batch size");
    sweep->add_option("--max-epochs", base_cfg.max_epochs, "epoch cap");
    sweep->add_option("--patience", base_cfg.patience, "early-stopping patience");
    sweep->add_option("--keep-p", base_arch.dropout_keep_p, "dropout keep probability");
    sweep->add_option("--l1", base_arch.l1_lambda, "L1 constant (softmax layer)");
    sweep->add_option("--l2", base_arch.l2_lambda, "L2 constant (softmax layer)");
    sweep->add_option("--seed", sweep_seed, "master seed")->required();
    sweep->add_option("--out", sweep_out, "parent of the run directory");
    sweep->add_option("--run-dir", sweep_run_dir, "exact run directory (overrides --out)");

    // ---- eval ----
    auto* evalc = with_config(app.add_subcommand("eval", "zero-one loss of a model on a test CSV"));
    std::string eval_model, eval_test, eval_out = ".", eval_run_dir;
    evalc->add_option("--model", eval_model, "model.json path")->required();
    evalc->add_option("--test", eval_test, "test.csv path")->required();
    evalc->add_option("--out", eval_out, "parent of the run directory");
    evalc->add_option("--run-dir", eval_run_dir, "exact run directory (overrides --out)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints help or the usage message
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth->parsed()) {
            synth_cfg.regime = churn::synth::regime_from_name(synth_regime);
            return cmd_synth(synth, synth_cfg, synth_out);
        }
        if (build->parsed())
            return cmd_build(build, build_raw, build_out, build_spec, origin_opt->count() > 0,
                             build_seed, build_normalize, build_time_unit, build_workers,
                             build_partitions);
        if (train->parsed())
            return cmd_train(train, train_data, train_variant, train_layers, base_arch, base_cfg,
                             train_seed, train_out, train_run_dir);
        if (sweep->parsed())
            return cmd_sweep(sweep, sweep_data, grid, sweep_variants, sweep_seeds, base_arch,
                             base_cfg, sweep_seed, sweep_workers, sweep_out, sweep_run_dir);
        if (evalc->parsed()) return cmd_eval(evalc, eval_model, eval_test, eval_out, eval_run_dir);
    } catch (const churn::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const churn::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
