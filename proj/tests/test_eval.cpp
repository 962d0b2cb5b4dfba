#include <doctest.h>

#include <cmath>
#include <fstream>

#include "churn/errors.hpp"
#include "churn/eval.hpp"
#include "churn/rng.hpp"
#include "test_support.hpp"

using namespace churn;
using namespace churn::eval;

TEST_CASE("zero_one_loss definition and errors") {
    CHECK(zero_one_loss({0, 1, 0}, {0, 1, 0}) == 0.0);
    CHECK(zero_one_loss({1, 0, 1}, {0, 1, 0}) == 1.0);
    CHECK(zero_one_loss({0, 1, 0, 0, 1, 1, 0, 0, 1, 1}, {0, 1, 0, 0, 1, 0, 1, 1, 1, 1}) == 0.3);
    CHECK_THROWS_AS(zero_one_loss({}, {}), DataError);
    CHECK_THROWS_AS(zero_one_loss({1}, {1, 0}), DataError);
}

TEST_CASE("hidden widths taper from the power of two below the input") {
    CHECK(hidden_widths(4, 100) == std::vector<std::size_t>{64, 32});
    CHECK(hidden_widths(5, 100) == std::vector<std::size_t>{64, 32, 16});
    CHECK(hidden_widths(6, 100) == std::vector<std::size_t>{64, 32, 16, 8});
    CHECK(hidden_widths(6, 200) == std::vector<std::size_t>{128, 64, 32, 16});
    CHECK(hidden_widths(6, 20) == std::vector<std::size_t>{16, 8, 8, 8}); // floor of 8
    CHECK(hidden_widths(3, 100) == std::vector<std::size_t>{64});

    // monotone non-increasing
    for (int layers : {4, 5, 6})
        for (int periods : {50, 100, 200}) {
            const auto w = hidden_widths(layers, periods);
            for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i] <= w[i - 1]);
            const bool tapers_below_input =
                w.front() < static_cast<std::size_t>(periods) || periods <= 8;
            CHECK(tapers_below_input);
        }
}

TEST_CASE("make_variant applies the architecture and optimizer deltas") {
    network::Architecture base;
    base.dropout_keep_p = 0.5;
    base.l1_lambda = 0.001;
    base.l2_lambda = 0.002;
    training::TrainConfig cfg;
    cfg.momentum_init = 0.5;

    const VariantSetup simple = make_variant(Variant::simple, 4, 100, base, cfg);
    CHECK(simple.arch.hidden_activation == network::Activation::tanh);
    CHECK(simple.arch.dropout_keep_p == 1.0);
    CHECK(simple.config.momentum_init == 0.0);
    CHECK(simple.config.momentum_growth == 1.0);
    CHECK(simple.arch.layer_sizes == std::vector<std::size_t>{100, 64, 32, 2});
    // L1/L2 retained: the baseline keeps both regularizations
    CHECK(simple.arch.l1_lambda == 0.001);
    CHECK(simple.arch.l2_lambda == 0.002);

    const VariantSetup proposed = make_variant(Variant::proposed, 6, 100, base, cfg);
    CHECK(proposed.arch.hidden_activation == network::Activation::relu);
    CHECK(proposed.arch.dropout_keep_p == 0.5);
    CHECK(proposed.config.momentum_init == 0.5);
    CHECK(proposed.arch.layer_sizes == std::vector<std::size_t>{100, 64, 32, 16, 8, 2});

    CHECK_THROWS_AS(variant_from_name("fancy"), DataError);
}

TEST_CASE("quantile_type7 matches hand computations") {
    CHECK(quantile_type7({0.2, 0.3, 0.4}, 0.0) == 0.2);
    CHECK(quantile_type7({0.2, 0.3, 0.4}, 0.5) == 0.3);
    CHECK(quantile_type7({0.2, 0.3, 0.4}, 1.0) == 0.4);
    // h = 0.75 on [1,2,3,4] -> 1.75; h = 2.25 -> 3.25
    CHECK(quantile_type7({1, 2, 3, 4}, 0.25) == doctest::Approx(1.75));
    CHECK(quantile_type7({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
    CHECK(quantile_type7({1, 2, 3, 4}, 0.75) == doctest::Approx(3.25));
    CHECK(quantile_type7({5.0}, 0.75) == 5.0);
}

namespace {

features::LabeledDataset toy_dataset(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    features::LabeledDataset ds;
    ds.periods = 6;
    for (std::size_t i = 0; i < n; ++i) {
        features::Row row;
        row.user_id = i;
        row.label = static_cast<int>(i % 2);
        for (int j = 0; j < 6; ++j)
            row.features.push_back(rng.uniform() * 0.2 + (row.label == 1 && j < 3 ? 0.6 : 0.0));
        ds.rows.push_back(std::move(row));
    }
    return ds;
}

SplitDatasets toy_split(int index, std::uint64_t seed) {
    SplitDatasets split;
    split.split_index = index;
    split.horizon_splits = 1;
    split.train = toy_dataset(48, seed);
    split.valid = toy_dataset(24, seed + 1);
    split.test = toy_dataset(24, seed + 2);
    return split;
}

} // namespace

TEST_CASE("run_sweep: cell cardinality and canonical order") {
    SweepGrid grid;
    grid.learning_rates = {0.001, 0.01, 0.1};
    grid.total_layers = {4, 5, 6};
    grid.seeds = {1};
    network::Architecture base;
    training::TrainConfig cfg;
    cfg.max_epochs = 2;
    cfg.patience = 2;
    cfg.batch_size = 16;

    const std::vector<SplitDatasets> datasets = {toy_split(0, 50), toy_split(1, 60)};
    const SweepResult result = run_sweep(datasets, grid, base, cfg, 2);
    CHECK(result.cells.size() == 36); // 2 splits x 2 variants x 3 lrs x 3 layers

    for (const SweepCell& cell : result.cells) {
        CHECK(cell.failure.empty());
        CHECK(cell.test_error >= 0.0);
        CHECK(cell.test_error <= 1.0);
        CHECK(cell.epochs > 0);
    }
    // first half is split 0, second half split 1
    CHECK(result.cells.front().split == 0);
    CHECK(result.cells.back().split == 1);
}

TEST_CASE("run_sweep is invariant to worker count") {
    SweepGrid grid;
    grid.learning_rates = {0.01, 0.1};
    grid.total_layers = {4};
    grid.seeds = {1, 2};
    grid.base_seed = 99;
    network::Architecture base;
    training::TrainConfig cfg;
    cfg.max_epochs = 6;
    cfg.patience = 6;
    cfg.batch_size = 16;

    const std::vector<SplitDatasets> datasets = {toy_split(0, 70)};
    const SweepResult serial = run_sweep(datasets, grid, base, cfg, 1);
    const SweepResult parallel = run_sweep(datasets, grid, base, cfg, 4);
    REQUIRE(serial.cells.size() == parallel.cells.size());
    for (std::size_t i = 0; i < serial.cells.size(); ++i) {
        CHECK(serial.cells[i].test_error == parallel.cells[i].test_error);
        CHECK(serial.cells[i].epochs == parallel.cells[i].epochs);
        CHECK(serial.cells[i].seed == parallel.cells[i].seed);
        // seconds is wall time and legitimately differs
    }
}

TEST_CASE("run_sweep records failures and carries on") {
    SweepGrid grid;
    grid.learning_rates = {0.01};
    grid.total_layers = {4};
    grid.seeds = {1};
    network::Architecture base;
    training::TrainConfig cfg;
    cfg.max_epochs = 2;

    SplitDatasets broken = toy_split(0, 80);
    broken.valid.rows.clear(); // training requires a validation set
    const SweepResult result = run_sweep({broken}, grid, base, cfg, 2);
    REQUIRE(result.cells.size() == 2);
    for (const SweepCell& cell : result.cells) {
        CHECK(!cell.failure.empty());
        CHECK(std::isnan(cell.test_error));
    }
    // all cells failed: summarize drops the group
    CHECK(summarize(result).empty());
}

TEST_CASE("summarize: single cell and quartile spread") {
    SweepResult result;
    SweepCell cell;
    cell.split = 3;
    cell.variant = Variant::proposed;
    cell.test_error = 0.2;
    result.cells.push_back(cell);
    const auto rows = summarize(result);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].min == 0.2);
    CHECK(rows[0].q1 == 0.2);
    CHECK(rows[0].median == 0.2);
    CHECK(rows[0].q3 == 0.2);
    CHECK(rows[0].max == 0.2);
    CHECK(rows[0].best.test_error == 0.2);

    SweepCell b = cell, c = cell;
    b.test_error = 0.3;
    b.lr = 0.9;
    c.test_error = 0.4;
    result.cells.push_back(b);
    result.cells.push_back(c);
    const auto spread = summarize(result);
    REQUIRE(spread.size() == 1);
    CHECK(spread[0].min == 0.2);
    CHECK(spread[0].median == 0.3);
    CHECK(spread[0].max == 0.4);
    CHECK(spread[0].best.lr == cell.lr);
}

TEST_CASE("sweep CSVs: pinned columns") {
    const auto dir = test_support::temp_dir("eval-csv");
    SweepResult result;
    SweepCell cell;
    cell.split = 0;
    cell.horizon = 1;
    cell.variant = Variant::simple;
    cell.lr = 0.001;
    cell.layers = 4;
    cell.seed = 1;
    cell.test_error = 0.25;
    cell.epochs = 12;
    cell.seconds = 0.5;
    result.cells.push_back(cell);
    write_cells_csv(dir / "cells.csv", result);
    write_summary_csv(dir / "summary.csv", summarize(result));

    std::ifstream cells_in(dir / "cells.csv");
    std::string header;
    std::getline(cells_in, header);
    CHECK(header == "split,horizon,variant,lr,layers,seed,test_error,epochs,seconds");
    std::string row;
    std::getline(cells_in, row);
    CHECK(row.rfind("0,1,simple,0.001,4,1,0.25,12,", 0) == 0);

    std::ifstream summary_in(dir / "summary.csv");
    std::getline(summary_in, header);
    CHECK(header.find("linear interpolation (type 7)") != std::string::npos);
}
