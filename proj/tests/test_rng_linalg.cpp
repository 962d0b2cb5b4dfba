#include <doctest.h>

#include <cmath>

#include "churn/linalg.hpp"
#include "churn/rng.hpp"

using namespace churn;

TEST_CASE("rng streams are deterministic under seed") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(derive_seed(5, "tag")), d(derive_seed(5, "tag"));
    CHECK(c.uniform() == d.uniform());
    CHECK(derive_seed(5, "tag") != derive_seed(5, "other"));
    CHECK(derive_seed(5, 1) != derive_seed(5, 2));
}

TEST_CASE("uniform stays in range, bernoulli and poisson have sane means") {
    Rng rng(7);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
    }
    CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));

    int heads = 0;
    for (int i = 0; i < 20000; ++i) heads += rng.bernoulli(0.3) ? 1 : 0;
    CHECK(heads / 20000.0 == doctest::Approx(0.3).epsilon(0.05));

    // Knuth below the split threshold and the halving path above it
    for (double lambda : {2.5, 80.0}) {
        double total = 0.0;
        for (int i = 0; i < 20000; ++i) total += static_cast<double>(rng.poisson(lambda));
        CHECK(total / 20000 == doctest::Approx(lambda).epsilon(0.05));
    }
}

TEST_CASE("uniform_int is bounded and covers values") {
    Rng rng(11);
    std::vector<int> seen(10, 0);
    for (int i = 0; i < 10000; ++i) {
        const auto v = rng.uniform_int(10);
        REQUIRE(v < 10);
        ++seen[static_cast<std::size_t>(v)];
    }
    for (int count : seen) CHECK(count > 800);
}

TEST_CASE("shuffle is a permutation and seed-stable") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    auto w = v;
    Rng r1(3), r2(3);
    shuffle(v, r1);
    shuffle(w, r2);
    CHECK(v == w);
    std::sort(w.begin(), w.end());
    for (int i = 0; i < 50; ++i) CHECK(w[static_cast<std::size_t>(i)] == i);
}

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-2.0, 2.0);
    return m;
}

} // namespace

TEST_CASE("openmp kernels match the serial reference bitwise") {
    Rng rng(99);
    // sizes straddle the parallel threshold
    const std::size_t dims[][3] = {{3, 4, 5}, {64, 100, 64}, {200, 150, 90}};
    for (const auto& d : dims) {
        const Matrix a = random_matrix(d[0], d[1], rng);
        const Matrix b = random_matrix(d[1], d[2], rng);
        Matrix par, ser;
        linalg::matmul(a, b, par);
        linalg::serial::matmul(a, b, ser);
        CHECK(par == ser);

        const Matrix at = random_matrix(d[1], d[0], rng);
        linalg::matmul_at_b(at, b, par);
        linalg::serial::matmul_at_b(at, b, ser);
        CHECK(par == ser);

        const Matrix bt = random_matrix(d[2], d[1], rng);
        linalg::matmul_a_bt(a, bt, par);
        linalg::serial::matmul_a_bt(a, bt, ser);
        CHECK(par == ser);
    }
}

TEST_CASE("matmul against a tiny hand-computed case") {
    Matrix a(2, 2), b(2, 2), out;
    a(0, 0) = 1;
    a(0, 1) = 2;
    a(1, 0) = 3;
    a(1, 1) = 4;
    b(0, 0) = 5;
    b(0, 1) = 6;
    b(1, 0) = 7;
    b(1, 1) = 8;
    linalg::matmul(a, b, out);
    CHECK(out(0, 0) == 19);
    CHECK(out(0, 1) == 22);
    CHECK(out(1, 0) == 43);
    CHECK(out(1, 1) == 50);

    linalg::add_row_inplace(out, {1.0, -1.0});
    CHECK(out(0, 0) == 20);
    CHECK(out(1, 1) == 49);

    const auto sums = linalg::column_sums(out);
    CHECK(sums[0] == 20 + 44);
    CHECK(sums[1] == 21 + 49);
}
