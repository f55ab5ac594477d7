#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "flest/matrix.hpp"

namespace flest {

/// Dense order-3 tensor, row-major (last index fastest), double precision.
class Tensor3 {
  public:
    Tensor3() = default;
    Tensor3(std::size_t d1, std::size_t d2, std::size_t d3)
        : dims_{d1, d2, d3}, data_(d1 * d2 * d3, 0.0) {}
    Tensor3(std::array<std::size_t, 3> dims, std::vector<double> data);

    static Tensor3 zeros(std::size_t d1, std::size_t d2, std::size_t d3) {
        return {d1, d2, d3};
    }
    /// Superdiagonal identity core: I(i,i,i) = 1.
    static Tensor3 superdiag_identity(std::size_t r);

    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * dims_[1] + j) * dims_[2] + k];
    }

    const std::array<std::size_t, 3>& dims() const { return dims_; }
    std::size_t dim(int mode) const { return dims_[static_cast<std::size_t>(mode - 1)]; }
    std::size_t size() const { return data_.size(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool all_finite() const;
    std::string shape_str() const;

  private:
    std::array<std::size_t, 3> dims_{0, 0, 0};
    std::vector<double> data_;
};

/// Mode-n product with a matrix: result dims equal t's with dims[n] replaced
/// by m.rows(); requires m.cols() == t.dims[n]. Modes are 1-based.
Tensor3 mode_n_product(const Tensor3& t, const Matrix& m, int mode);

/// Contract two order-3 tensors over two index pairs, yielding a matrix whose
/// rows index t's free mode and whose columns index u's free mode. t_modes
/// and u_modes are 1-based and matched positionally: t_modes.first pairs with
/// u_modes.first, t_modes.second with u_modes.second.
Matrix contract_two(const Tensor3& t, const Tensor3& u, std::pair<int, int> t_modes,
                    std::pair<int, int> u_modes);

}  // namespace flest
