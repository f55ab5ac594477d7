#include "flest/tensor3.hpp"

#include <cmath>
#include <stdexcept>

namespace flest {

Tensor3::Tensor3(std::array<std::size_t, 3> dims, std::vector<double> data)
    : dims_(dims), data_(std::move(data)) {
    if (data_.size() != dims_[0] * dims_[1] * dims_[2]) {
        throw std::invalid_argument("Tensor3: data length " + std::to_string(data_.size()) +
                                    " != " + shape_str());
    }
}

Tensor3 Tensor3::superdiag_identity(std::size_t r) {
    Tensor3 t(r, r, r);
    for (std::size_t i = 0; i < r; ++i) t(i, i, i) = 1.0;
    return t;
}

bool Tensor3::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

std::string Tensor3::shape_str() const {
    return std::to_string(dims_[0]) + "x" + std::to_string(dims_[1]) + "x" +
           std::to_string(dims_[2]);
}

Tensor3 mode_n_product(const Tensor3& t, const Matrix& m, int mode) {
    if (mode < 1 || mode > 3) {
        throw std::invalid_argument("mode_n_product: mode must be 1, 2 or 3, got " +
                                    std::to_string(mode));
    }
    const std::size_t n = static_cast<std::size_t>(mode - 1);
    if (m.cols() != t.dims()[n]) {
        throw_shape_error("mode_n_product(mode " + std::to_string(mode) + ")", t.shape_str(),
                          m.shape_str());
    }
    std::array<std::size_t, 3> rd = t.dims();
    rd[n] = m.rows();
    Tensor3 out(rd[0], rd[1], rd[2]);
    for (std::size_t i = 0; i < rd[0]; ++i) {
        for (std::size_t j = 0; j < rd[1]; ++j) {
            for (std::size_t k = 0; k < rd[2]; ++k) {
                double s = 0.0;
                for (std::size_t p = 0; p < t.dims()[n]; ++p) {
                    switch (n) {
                        case 0: s += m(i, p) * t(p, j, k); break;
                        case 1: s += m(j, p) * t(i, p, k); break;
                        default: s += m(k, p) * t(i, j, p); break;
                    }
                }
                out(i, j, k) = s;
            }
        }
    }
    return out;
}

namespace {

int free_mode(std::pair<int, int> modes) {
    const int a = modes.first, b = modes.second;
    if (a < 1 || a > 3 || b < 1 || b > 3 || a == b) {
        throw std::invalid_argument("contract_two: mode pair must name two distinct modes in "
                                    "{1,2,3}, got (" +
                                    std::to_string(a) + "," + std::to_string(b) + ")");
    }
    return 6 - a - b;
}

std::size_t index3(const Tensor3& t, int free, std::size_t f, std::pair<int, int> modes,
                   std::size_t x, std::size_t y) {
    std::array<std::size_t, 3> idx{};
    idx[static_cast<std::size_t>(free - 1)] = f;
    idx[static_cast<std::size_t>(modes.first - 1)] = x;
    idx[static_cast<std::size_t>(modes.second - 1)] = y;
    return (idx[0] * t.dims()[1] + idx[1]) * t.dims()[2] + idx[2];
}

}  // namespace

Matrix contract_two(const Tensor3& t, const Tensor3& u, std::pair<int, int> t_modes,
                    std::pair<int, int> u_modes) {
    const int tf = free_mode(t_modes);
    const int uf = free_mode(u_modes);
    const std::size_t c1 = t.dim(t_modes.first);
    const std::size_t c2 = t.dim(t_modes.second);
    if (c1 != u.dim(u_modes.first) || c2 != u.dim(u_modes.second)) {
        throw_shape_error("contract_two(modes (" + std::to_string(t_modes.first) + "," +
                              std::to_string(t_modes.second) + ")/(" +
                              std::to_string(u_modes.first) + "," +
                              std::to_string(u_modes.second) + "))",
                          t.shape_str(), u.shape_str());
    }
    Matrix out(t.dim(tf), u.dim(uf));
    auto td = t.data();
    auto ud = u.data();
    for (std::size_t a = 0; a < out.rows(); ++a) {
        for (std::size_t b = 0; b < out.cols(); ++b) {
            double s = 0.0;
            for (std::size_t x = 0; x < c1; ++x) {
                for (std::size_t y = 0; y < c2; ++y) {
                    s += td[index3(t, tf, a, t_modes, x, y)] *
                         ud[index3(u, uf, b, u_modes, x, y)];
                }
            }
            out(a, b) = s;
        }
    }
    return out;
}

}  // namespace flest
