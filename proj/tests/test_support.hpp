#pragma once

// Independent oracles for the unit and acceptance tests. Nothing here calls
// the transform or product code under test.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include <Eigen/SVD>

#include "starcomplete/rng.hpp"
#include "starcomplete/tensor.hpp"

namespace sc_test {

using starcomplete::cplx;
using starcomplete::Matrix;
using starcomplete::Tensor3;

inline Tensor3 random_tensor(std::size_t n1, std::size_t n2, std::size_t n3, starcomplete::CounterRng& rng,
                             bool complex = true) {
    Tensor3 t(n1, n2, n3);
    for (auto& z : t.data()) z = complex ? rng.complex_normal() : cplx(rng.normal(), 0.0);
    return t;
}

inline Matrix random_matrix(std::size_t m, std::size_t n, starcomplete::CounterRng& rng, bool complex = true) {
    Matrix a(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = complex ? rng.complex_normal() : cplx(rng.normal(), 0.0);
    return a;
}

/// Product of two Gaussian factors, so rank r almost surely.
inline Matrix random_low_rank(std::size_t m, std::size_t n, std::size_t r, starcomplete::CounterRng& rng,
                              bool complex = false) {
    return random_matrix(m, r, rng, complex) * random_matrix(r, n, rng, complex);
}

/// O(n^2) unnormalized DFT matrix, F(k,j) = exp(-2 pi i k j / n).
inline Matrix naive_dft_matrix(std::size_t n) {
    Matrix f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j) f(Eigen::Index(k), Eigen::Index(j)) = std::polar(1.0, -2.0 * std::numbers::pi * double(k) * double(j) / double(n));
    return f;
}

/// Orthonormal DCT-II from its textbook definition.
inline Matrix naive_dct_matrix(std::size_t n) {
    Matrix c(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j) {
            const double a = k == 0 ? std::sqrt(1.0 / double(n)) : std::sqrt(2.0 / double(n));
            c(Eigen::Index(k), Eigen::Index(j)) = a * std::cos(std::numbers::pi * (double(j) + 0.5) * double(k) / double(n));
        }
    return c;
}

/// Entrywise mode-3 product: B(i,j,k) = sum_q M(k,q) A(i,j,q).
inline Tensor3 mode3_oracle(const Tensor3& a, const Matrix& m) {
    Tensor3 b(a.n1(), a.n2(), std::size_t(m.rows()));
    for (std::size_t i = 0; i < a.n1(); ++i)
        for (std::size_t j = 0; j < a.n2(); ++j)
            for (Eigen::Index k = 0; k < m.rows(); ++k) {
                cplx s(0.0, 0.0);
                for (std::size_t q = 0; q < a.n3(); ++q) s += m(k, Eigen::Index(q)) * a(i, j, q);
                b(i, j, std::size_t(k)) = s;
            }
    return b;
}

/// (X *_M Y)_{abg} = sum_{g'} Minv(g,g') sum_d Xhat(a,d,g') Yhat(d,b,g'), evaluated with explicit loops.
inline Tensor3 mprod_index_oracle(const Tensor3& x, const Tensor3& y, const Matrix& m) {
    const Matrix minv = m.inverse();
    const std::size_t n1 = x.n1(), nd = x.n2(), n2 = y.n2(), n3 = x.n3();
    const Tensor3 xh = mode3_oracle(x, m);
    const Tensor3 yh = mode3_oracle(y, m);
    Tensor3 z(n1, n2, n3);
    for (std::size_t a = 0; a < n1; ++a)
        for (std::size_t b = 0; b < n2; ++b)
            for (std::size_t g = 0; g < n3; ++g) {
                cplx s(0.0, 0.0);
                for (std::size_t gp = 0; gp < n3; ++gp) {
                    cplx inner(0.0, 0.0);
                    for (std::size_t d = 0; d < nd; ++d) inner += xh(a, d, gp) * yh(d, b, gp);
                    s += minv(Eigen::Index(g), Eigen::Index(gp)) * inner;
                }
                z(a, b, g) = s;
            }
    return z;
}

inline double rel_diff(const Tensor3& a, const Tensor3& b) {
    const double den = std::sqrt(starcomplete::squared_norm(b.data()));
    const double num = std::sqrt(starcomplete::squared_norm((a - b).data()));
    return den > 0.0 ? num / den : num;
}

inline double rel_diff(const Matrix& a, const Matrix& b) {
    const double den = b.norm();
    return den > 0.0 ? (a - b).norm() / den : (a - b).norm();
}

/// Numerical rank of a matrix at tol * sigma_max.
inline std::size_t matrix_rank(const Matrix& a, double tol) {
    Eigen::JacobiSVD<Matrix> svd(a);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    return std::size_t((s.array() > tol * s(0)).count());
}

} // namespace sc_test
