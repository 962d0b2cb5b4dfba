// Compares the OpenMP kernels and the parallel dataflow engine against
// their serial reference implementations: equal results, wall time, speedup.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <utility>
#include <vector>

#include <omp.h>

#include "churn/dataflow.hpp"
#include "churn/linalg.hpp"
#include "churn/rng.hpp"

using churn::Matrix;
using churn::Rng;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
}

double time_of(const std::function<void()>& fn, int reps) {
    fn(); // warm up
    const double t0 = omp_get_wtime();
    for (int i = 0; i < reps; ++i) fn();
    return (omp_get_wtime() - t0) / reps;
}

void report(const char* name, double serial, double parallel, bool equal) {
    std::printf("%-28s serial %8.3f ms   parallel %8.3f ms   speedup %.2fx   %s\n", name,
                serial * 1e3, parallel * 1e3, serial / parallel, equal ? "equal" : "MISMATCH");
}

void bench_matmul(std::size_t m, std::size_t k, std::size_t n, int reps) {
    Rng rng(42);
    const Matrix a = random_matrix(m, k, rng);
    const Matrix b = random_matrix(k, n, rng);
    Matrix out_serial, out_parallel;

    const double ts = time_of([&] { churn::linalg::serial::matmul(a, b, out_serial); }, reps);
    const double tp = time_of([&] { churn::linalg::matmul(a, b, out_parallel); }, reps);
    char name[64];
    std::snprintf(name, sizeof name, "matmul %zux%zux%zu", m, k, n);
    report(name, ts, tp, out_serial == out_parallel);
}

void bench_wordcount(std::size_t n_records, std::size_t workers, std::size_t partitions) {
    Rng rng(7);
    std::vector<std::uint64_t> values(n_records);
    for (auto& v : values) v = rng.uniform_int(5000);

    auto plan = churn::dataflow::reduce_by_key(
        churn::dataflow::source(values).map(
            [](const std::uint64_t& v) { return std::make_pair(v % 1000, std::uint64_t{1}); }),
        [](const std::uint64_t& a, const std::uint64_t& b) { return a + b; });

    std::vector<std::pair<std::uint64_t, std::uint64_t>> ref, par;
    const double ts = time_of(
        [&] {
            ref = churn::dataflow::reference::evaluate(plan);
            churn::dataflow::canonical_sort(ref);
        },
        3);
    const double tp = time_of(
        [&] { par = churn::dataflow::execute(plan, {workers, partitions}); }, 3);
    char name[64];
    std::snprintf(name, sizeof name, "dataflow count n=%zu w=%zu", n_records, workers);
    report(name, ts, tp, ref == par);
}

} // namespace

int main(int argc, char** argv) {
    const int threads = argc > 1 ? std::atoi(argv[1]) : omp_get_max_threads();
    omp_set_num_threads(threads);
    std::printf("threads: %d\n\n", threads);

    bench_matmul(256, 256, 256, 10);
    bench_matmul(512, 128, 256, 10);
    bench_matmul(64, 100, 64, 50);

    bench_wordcount(2'000'000, static_cast<std::size_t>(threads), 16);
    bench_wordcount(200'000, static_cast<std::size_t>(threads), 8);
    return 0;
}
