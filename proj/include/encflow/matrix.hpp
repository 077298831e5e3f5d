#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "encflow/common.hpp"

namespace encflow {

// Dense row-major matrix of doubles. Small and value-semantic; every model
// input in this library is one of these or a vector of them.
class Matrix {
public:
    Matrix() = default;
    Matrix(size_t rows, size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
    double operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }

    double* row(size_t r) { return data_.data() + r * cols_; }
    const double* row(size_t r) const { return data_.data() + r * cols_; }

    std::span<const double> row_span(size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    size_t rows_ = 0;
    size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
    }
    Matrix out(a.rows(), b.cols());
    for (size_t i = 0; i < a.rows(); ++i) {
        for (size_t k = 0; k < a.cols(); ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            double* orow = out.row(i);
            for (size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

// X^T * X without forming the transpose. Result is cols x cols, symmetric by
// construction (entry (i,j) and (j,i) come from the same accumulation order).
inline Matrix transpose_times_self(const Matrix& x) {
    Matrix out(x.cols(), x.cols());
    for (size_t i = 0; i < x.cols(); ++i) {
        for (size_t j = i; j < x.cols(); ++j) {
            double s = 0.0;
            for (size_t r = 0; r < x.rows(); ++r) s += x(r, i) * x(r, j);
            out(i, j) = s;
            out(j, i) = s;
        }
    }
    return out;
}

}  // namespace encflow
