#include "churn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <omp.h>

#include "churn/errors.hpp"

namespace churn::eval {

double zero_one_loss(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.empty()) throw DataError("zero_one_loss: empty input");
    if (predictions.size() != labels.size())
        throw DataError("zero_one_loss: size mismatch");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        wrong += predictions[i] != labels[i] ? 1 : 0;
    return static_cast<double>(wrong) / static_cast<double>(predictions.size());
}

Variant variant_from_name(const std::string& name) {
    if (name == "simple") return Variant::simple;
    if (name == "proposed") return Variant::proposed;
    throw DataError("unknown variant: " + name);
}

std::string variant_name(Variant v) {
    return v == Variant::simple ? "simple" : "proposed";
}

std::vector<std::size_t> hidden_widths(int total_layers, int periods) {
    if (total_layers < 3) throw DataError("need at least 3 total layers");
    std::size_t top = 8;
    while (top * 2 < static_cast<std::size_t>(periods)) top *= 2;
    std::vector<std::size_t> widths;
    for (int i = 0; i < total_layers - 2; ++i)
        widths.push_back(std::max<std::size_t>(8, top >> i));
    return widths;
}

VariantSetup make_variant(Variant variant, int total_layers, int periods,
                          const network::Architecture& base_arch,
                          const training::TrainConfig& base_config) {
    VariantSetup setup;
    setup.config = base_config;

    setup.arch = base_arch;
    setup.arch.layer_sizes.clear();
    setup.arch.layer_sizes.push_back(static_cast<std::size_t>(periods));
    for (std::size_t w : hidden_widths(total_layers, periods))
        setup.arch.layer_sizes.push_back(w);
    setup.arch.layer_sizes.push_back(2);

    switch (variant) {
    case Variant::simple:
        setup.arch.hidden_activation = network::Activation::tanh;
        setup.arch.dropout_keep_p = 1.0;
        setup.config.momentum_init = 0.0;
        setup.config.momentum_growth = 1.0;
        break;
    case Variant::proposed:
        setup.arch.hidden_activation = network::Activation::relu;
        break;
    }
    setup.arch.validate();
    return setup;
}

void SweepGrid::validate() const {
    if (learning_rates.empty() || total_layers.empty() || variants.empty() || seeds.empty())
        throw DataError("sweep grid has an empty axis");
    for (int l : total_layers)
        if (l < 3) throw DataError("sweep layer counts must be >= 3");
    for (double lr : learning_rates)
        if (lr <= 0.0) throw DataError("sweep learning rates must be positive");
}

namespace {

std::uint64_t cell_seed(std::uint64_t base, const SweepCell& cell) {
    std::uint64_t s = derive_seed(base, cell.seed);
    s = derive_seed(s, static_cast<std::uint64_t>(cell.split));
    s = derive_seed(s, cell.variant == Variant::simple ? 0u : 1u);
    s = derive_seed(s, static_cast<std::uint64_t>(cell.layers));
    s = derive_seed(s, fnv1a64(features::format_double(cell.lr)));
    return s;
}

} // namespace

SweepResult run_sweep(const std::vector<SplitDatasets>& datasets, const SweepGrid& grid,
                      const network::Architecture& base_arch,
                      const training::TrainConfig& base_config, std::size_t workers) {
    grid.validate();
    if (datasets.empty()) throw DataError("run_sweep: no datasets");
    if (workers < 1) throw DataError("run_sweep: workers must be >= 1");

    SweepResult result;
    for (const SplitDatasets& split : datasets)
        for (Variant variant : grid.variants)
            for (double lr : grid.learning_rates)
                for (int layers : grid.total_layers)
                    for (std::uint64_t seed : grid.seeds) {
                        SweepCell cell;
                        cell.split = split.split_index;
                        cell.horizon = split.horizon_splits;
                        cell.variant = variant;
                        cell.lr = lr;
                        cell.layers = layers;
                        cell.seed = seed;
                        result.cells.push_back(cell);
                    }

    const std::size_t cells_per_split = result.cells.size() / datasets.size();

#pragma omp parallel for num_threads(static_cast<int>(workers)) schedule(dynamic)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(result.cells.size()); ++c) {
        SweepCell& cell = result.cells[static_cast<std::size_t>(c)];
        const SplitDatasets& split = datasets[static_cast<std::size_t>(c) / cells_per_split];
        const double t0 = omp_get_wtime();
        try {
            const int periods = static_cast<int>(split.train.rows.front().features.size());
            VariantSetup setup =
                make_variant(cell.variant, cell.layers, periods, base_arch, base_config);
            setup.config.learning_rate = cell.lr;
            setup.config.seed = cell_seed(grid.base_seed, cell);

            network::Network net =
                network::init_network(setup.arch, derive_seed(setup.config.seed, "init"));
            const training::TrainResult trained =
                training::train(std::move(net), split.train, split.valid, setup.config);

            const Matrix x_test = training::dataset_features(split.test);
            cell.test_error = zero_one_loss(network::predict(trained.best, x_test),
                                            training::dataset_labels(split.test));
            cell.epochs = trained.state.epoch;
        } catch (const std::exception& e) {
            cell.test_error = std::numeric_limits<double>::quiet_NaN();
            cell.epochs = 0;
            cell.failure = e.what();
        }
        cell.seconds = omp_get_wtime() - t0;
    }
    return result;
}

double quantile_type7(const std::vector<double>& sorted_values, double q) {
    if (sorted_values.empty()) throw DataError("quantile of empty set");
    if (sorted_values.size() == 1) return sorted_values.front();
    const double h = q * static_cast<double>(sorted_values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted_values.size() - 1);
    const double frac = h - std::floor(h);
    return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

std::vector<SummaryRow> summarize(const SweepResult& result) {
    if (result.cells.empty()) throw DataError("summarize: empty sweep");

    std::vector<std::pair<int, Variant>> keys;
    for (const SweepCell& cell : result.cells) {
        const std::pair<int, Variant> key{cell.split, cell.variant};
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }

    std::vector<SummaryRow> rows;
    for (const auto& [split, variant] : keys) {
        SummaryRow row;
        row.split = split;
        row.variant = variant;
        std::vector<double> errors;
        const SweepCell* best = nullptr;
        for (const SweepCell& cell : result.cells) {
            if (cell.split != split || cell.variant != variant || !cell.failure.empty()) continue;
            errors.push_back(cell.test_error);
            if (!best || cell.test_error < best->test_error) best = &cell;
        }
        if (errors.empty()) continue; // every cell of this group failed
        std::sort(errors.begin(), errors.end());
        row.cells = errors.size();
        row.min = errors.front();
        row.q1 = quantile_type7(errors, 0.25);
        row.median = quantile_type7(errors, 0.5);
        row.q3 = quantile_type7(errors, 0.75);
        row.max = errors.back();
        row.best = *best;
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_cells_csv(const std::filesystem::path& path, const SweepResult& result) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write sweep cells: " + path.string());
    out << "split,horizon,variant,lr,layers,seed,test_error,epochs,seconds\n";
    for (const SweepCell& cell : result.cells) {
        out << cell.split << ',' << cell.horizon << ',' << variant_name(cell.variant) << ','
            << features::format_double(cell.lr) << ',' << cell.layers << ',' << cell.seed << ','
            << features::format_double(cell.test_error) << ',' << cell.epochs << ','
            << features::format_double(cell.seconds) << '\n';
    }
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write sweep summary: " + path.string());
    out << "# quartiles: linear interpolation (type 7)\n";
    out << "split,variant,cells,min,q1,median,q3,max,best_lr,best_layers,best_seed\n";
    for (const SummaryRow& row : rows) {
        out << row.split << ',' << variant_name(row.variant) << ',' << row.cells << ','
            << features::format_double(row.min) << ',' << features::format_double(row.q1) << ','
            << features::format_double(row.median) << ',' << features::format_double(row.q3)
            << ',' << features::format_double(row.max) << ','
            << features::format_double(row.best.lr) << ',' << row.best.layers << ','
            << row.best.seed << '\n';
    }
}

} // namespace churn::eval
