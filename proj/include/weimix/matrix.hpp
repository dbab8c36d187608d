#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace weimix {

/// Dense row-major matrix of doubles. Rows are observations, columns are
/// features/units throughout the library.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Y = X * W.  X is (n, k), W is (k, m), Y is (n, m).  The k-loop sits in the
/// middle so the inner loop walks both W and Y rows contiguously.
inline void matmul(const Matrix& x, const Matrix& w, Matrix& y) {
    assert(x.cols() == w.rows());
    const std::size_t n = x.rows(), k = x.cols(), m = w.cols();
    if (y.rows() != n || y.cols() != m) y = Matrix(n, m);
    y.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.row(i);
        double* yi = y.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double xv = xi[p];
            if (xv == 0.0) continue;
            const double* wp = w.row(p);
            for (std::size_t j = 0; j < m; ++j) yi[j] += xv * wp[j];
        }
    }
}

/// dX = dY * W^T.  dY is (n, m), W is (k, m), dX is (n, k).
inline void matmul_bt(const Matrix& dy, const Matrix& w, Matrix& dx) {
    assert(dy.cols() == w.cols());
    const std::size_t n = dy.rows(), m = dy.cols(), k = w.rows();
    if (dx.rows() != n || dx.cols() != k) dx = Matrix(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        const double* di = dy.row(i);
        double* xi = dx.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double* wp = w.row(p);
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += di[j] * wp[j];
            xi[p] = acc;
        }
    }
}

/// dW = X^T * dY.  X is (n, k), dY is (n, m), dW is (k, m).
inline void matmul_at(const Matrix& x, const Matrix& dy, Matrix& dw) {
    assert(x.rows() == dy.rows());
    const std::size_t n = x.rows(), k = x.cols(), m = dy.cols();
    if (dw.rows() != k || dw.cols() != m) dw = Matrix(k, m);
    dw.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.row(i);
        const double* di = dy.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const double xv = xi[p];
            if (xv == 0.0) continue;
            double* wp = dw.row(p);
            for (std::size_t j = 0; j < m; ++j) wp[j] += xv * di[j];
        }
    }
}

}  // namespace weimix
