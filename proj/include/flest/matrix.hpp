#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace flest {

/// Dense real matrix, row-major, double precision.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }
    static Matrix identity(std::size_t n);

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    /// Copy of column j.
    std::vector<double> col(std::size_t j) const;
    void set_col(std::size_t j, std::span<const double> v);

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;

    std::string shape_str() const;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
double frobenius_norm_sq(const Matrix& m);

/// y = A x
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
/// y = A^T x
std::vector<double> matvec_t(const Matrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);

[[noreturn]] void throw_shape_error(const std::string& op, const std::string& lhs,
                                    const std::string& rhs);

}  // namespace flest
