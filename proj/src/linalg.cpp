#include "churn/linalg.hpp"

#include <cassert>
#include <cstddef>

namespace churn::linalg {

namespace {
// Below this many multiply-adds the fork/join overhead dominates on the
// small per-batch matrices the trainer feeds us.
constexpr std::size_t kParallelFlops = 1u << 15;
} // namespace

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.cols() == b.rows());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (out.rows() != m || out.cols() != n) out = Matrix(m, n);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
#pragma omp parallel for schedule(static) if (m * n * k > kParallelFlops)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        double* row = po + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] = 0.0;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = pa[i * k + l];
            const double* brow = pb + l * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
}

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.rows() == b.rows());
    const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
    if (out.rows() != m || out.cols() != n) out = Matrix(m, n);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
#pragma omp parallel for schedule(static) if (m * n * k > kParallelFlops)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        double* row = po + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] = 0.0;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = pa[l * m + i];
            const double* brow = pb + l * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
}

void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.cols() == b.cols());
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (out.rows() != m || out.cols() != n) out = Matrix(m, n);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
#pragma omp parallel for schedule(static) if (m * n * k > kParallelFlops)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        double* row = po + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* arow = pa + i * k;
            const double* brow = pb + j * k;
            double acc = 0.0;
            for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
            row[j] = acc;
        }
    }
}

void add_row_inplace(Matrix& m, const std::vector<double>& row) {
    assert(m.cols() == row.size());
    double* p = m.data();
    const std::size_t n = m.cols();
#pragma omp parallel for schedule(static) if (m.size() > kParallelFlops)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m.rows()); ++i)
        for (std::size_t j = 0; j < n; ++j) p[i * n + j] += row[j];
}

std::vector<double> column_sums(const Matrix& m) {
    // fixed row order keeps the reduction deterministic
    std::vector<double> sums(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) sums[j] += m(i, j);
    return sums;
}

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.cols() == b.rows());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (out.rows() != m || out.cols() != n) out = Matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out(i, j) = 0.0;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a(i, l);
            for (std::size_t j = 0; j < n; ++j) out(i, j) += av * b(l, j);
        }
    }
}

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.rows() == b.rows());
    const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
    if (out.rows() != m || out.cols() != n) out = Matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out(i, j) = 0.0;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a(l, i);
            for (std::size_t j = 0; j < n; ++j) out(i, j) += av * b(l, j);
        }
    }
}

void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out) {
    assert(a.cols() == b.cols());
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (out.rows() != m || out.cols() != n) out = Matrix(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < k; ++l) acc += a(i, l) * b(j, l);
            out(i, j) = acc;
        }
}

} // namespace serial
} // namespace churn::linalg
