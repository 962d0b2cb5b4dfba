#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "test_support.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& command) {
    const int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

bool same_bytes(const fs::path& a, const fs::path& b) { return slurp(a) == slurp(b); }

// cells.csv without the wall-time column
std::string strip_seconds(const fs::path& path) {
    std::istringstream in(slurp(path));
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        const auto cut = line.rfind(',');
        out << line.substr(0, cut) << '\n';
    }
    return out.str();
}

} // namespace

TEST_CASE("cli end to end: synth, build, train, eval, sweep") {
    const std::string cli = test_support::cli_path();
    REQUIRE(!cli.empty());
    const auto dir = test_support::temp_dir("cli");
    const std::string quiet = " > " + (dir / "out.txt").string() + " 2> " +
                              (dir / "err.txt").string();

    SUBCASE("missing required --seed is a usage error") {
        CHECK(run(cli + " synth --users 5 --days 90 --out " + (dir / "x").string() + quiet) == 1);
        const std::string err = slurp(dir / "err.txt");
        CHECK(err.find("--seed") != std::string::npos);
    }

    SUBCASE("unreadable raw-dump directory is a data error") {
        CHECK(run(cli + " build --raw-dump " + (dir / "nope").string() + " --out " +
                  (dir / "d").string() + " --seed 1" + quiet) == 2);
    }

    SUBCASE("flags can come from a key=value config file") {
        const fs::path conf = dir / "synth.conf";
        std::ofstream(conf) << "users=30\ndays=95\nseed=5\nout=" +
                                   (dir / "cfg-dumps").string() + "\n";
        CHECK(run(cli + " synth --config " + conf.string() + quiet) == 0);
        CHECK(fs::exists(dir / "cfg-dumps" / "raw-dump-094.jsonl"));
        CHECK(!fs::exists(dir / "cfg-dumps" / "raw-dump-095.jsonl"));
    }

    SUBCASE("happy path and reruns") {
        const fs::path dumps = dir / "dumps";
        const std::string synth_cmd = cli + " synth --users 150 --days 120 --seed 42 --out ";
        REQUIRE(run(synth_cmd + dumps.string() + quiet) == 0);
        REQUIRE(fs::exists(dumps / "raw-dump-000.jsonl"));
        REQUIRE(fs::exists(dumps / "ground_truth.csv"));
        REQUIRE(fs::exists(dumps / "manifest.json"));

        // rerun with the same flags: byte-identical data outputs
        const fs::path dumps2 = dir / "dumps2";
        REQUIRE(run(synth_cmd + dumps2.string() + quiet) == 0);
        CHECK(same_bytes(dumps / "raw-dump-000.jsonl", dumps2 / "raw-dump-000.jsonl"));
        CHECK(same_bytes(dumps / "raw-dump-119.jsonl", dumps2 / "raw-dump-119.jsonl"));
        CHECK(same_bytes(dumps / "ground_truth.csv", dumps2 / "ground_truth.csv"));

        // build: 120 days = 4 splits -> exactly one train/valid/test triple
        const fs::path data = dir / "data";
        REQUIRE(run(cli + " build --raw-dump " + dumps.string() + " --out " + data.string() +
                    " --start 1600000000 --seed 7 --workers 2 --partitions 4" + quiet) == 0);
        REQUIRE(fs::exists(data / "split_0" / "train.csv"));
        REQUIRE(fs::exists(data / "split_0" / "valid.csv"));
        REQUIRE(fs::exists(data / "split_0" / "test.csv"));
        REQUIRE(fs::exists(data / "split_0" / "meta.json"));
        const std::string build_out = slurp(dir / "out.txt");
        CHECK(build_out.find("split 0:") != std::string::npos); // class counts printed

        // train on the triple
        const fs::path run_dir = dir / "train-run";
        REQUIRE(run(cli + " train --data " + (data / "split_0").string() +
                    " --variant proposed --layers 4 --lr 0.01 --max-epochs 30 --seed 3" +
                    " --run-dir " + run_dir.string() + quiet) == 0);
        REQUIRE(fs::exists(run_dir / "model.json"));
        REQUIRE(fs::exists(run_dir / "training_log.csv"));
        REQUIRE(fs::exists(run_dir / "manifest.json"));
        {
            std::ifstream log(run_dir / "training_log.csv");
            std::string header;
            std::getline(log, header);
            CHECK(header == "epoch,lr,momentum,train_cost,valid_error");
        }

        // eval prints and writes the zero-one error
        const fs::path eval_dir = dir / "eval-run";
        REQUIRE(run(cli + " eval --model " + (run_dir / "model.json").string() + " --test " +
                    (data / "split_0" / "test.csv").string() + " --run-dir " + eval_dir.string() +
                    quiet) == 0);
        CHECK(slurp(dir / "out.txt").find("zero-one error") != std::string::npos);
        CHECK(fs::exists(eval_dir / "eval.json"));

        // tiny sweep twice with one seed: identical apart from wall time
        const fs::path s1 = dir / "sweep1", s2 = dir / "sweep2";
        const std::string sweep_cmd = cli + " sweep --data " + data.string() +
                                      " --lrs 0.01 --layers 4 --seeds-per-cell 1" +
                                      " --max-epochs 15 --seed 11 --workers 2 --run-dir ";
        REQUIRE(run(sweep_cmd + s1.string() + quiet) == 0);
        REQUIRE(run(sweep_cmd + s2.string() + quiet) == 0);
        CHECK(strip_seconds(s1 / "cells.csv") == strip_seconds(s2 / "cells.csv"));
        CHECK(same_bytes(s1 / "summary.csv", s2 / "summary.csv"));
        {
            std::ifstream cells(s1 / "cells.csv");
            std::string line;
            std::size_t rows = 0;
            std::getline(cells, line); // header
            while (std::getline(cells, line)) ++rows;
            CHECK(rows == 2); // 1 split x 2 variants x 1 lr x 1 depth x 1 seed
        }
    }
}
