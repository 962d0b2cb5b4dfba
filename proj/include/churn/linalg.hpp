#ifndef CHURN_LINALG_HPP
#define CHURN_LINALG_HPP

#include <cstddef>
#include <vector>

namespace churn {

// Dense row-major matrix of doubles. Small by design: the toolkit only
// needs the handful of kernels the feed-forward passes use.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    const std::vector<double>& values() const { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace linalg {

// OpenMP kernels. Each output element is produced by exactly one thread
// with a fixed inner-loop order, so results are bitwise identical for any
// thread count. Serial counterparts live in linalg::serial and are the
// reference the tests and the benchmark compare against.

// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// out = a^T * b
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out);
// out = a * b^T
void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out);

// m(i, :) += row
void add_row_inplace(Matrix& m, const std::vector<double>& row);
// column sums of m
std::vector<double> column_sums(const Matrix& m);

namespace serial {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_a_bt(const Matrix& a, const Matrix& b, Matrix& out);
} // namespace serial

} // namespace linalg
} // namespace churn

#endif
