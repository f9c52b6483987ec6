#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace starcomplete {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

/// Dense complex n1 x n2 x n3 array.
///
/// Storage is column-major inside each frontal slice and frontal slices are
/// contiguous in k, so slice k occupies [k*n1*n2, (k+1)*n1*n2). Indices are
/// zero-based in code; the CLI and CSV outputs report one-based slice numbers.
class Tensor3 {
public:
    Tensor3() = default;

    Tensor3(std::size_t n1, std::size_t n2, std::size_t n3)
        : n1_(n1), n2_(n2), n3_(n3), data_(n1 * n2 * n3, cplx(0.0, 0.0)) {
        if (n1 == 0 || n2 == 0 || n3 == 0) throw dimension_error("Tensor3 extents must be positive");
    }

    Tensor3(std::size_t n1, std::size_t n2, std::size_t n3, std::vector<cplx> data)
        : n1_(n1), n2_(n2), n3_(n3), data_(std::move(data)) {
        if (n1 == 0 || n2 == 0 || n3 == 0) throw dimension_error("Tensor3 extents must be positive");
        if (data_.size() != n1 * n2 * n3) throw dimension_error("Tensor3 data length does not match extents");
    }

    std::size_t n1() const { return n1_; }
    std::size_t n2() const { return n2_; }
    std::size_t n3() const { return n3_; }
    std::size_t size() const { return data_.size(); }
    std::size_t slice_size() const { return n1_ * n2_; }
    bool empty() const { return data_.empty(); }

    bool same_shape(const Tensor3& o) const { return n1_ == o.n1_ && n2_ == o.n2_ && n3_ == o.n3_; }

    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return i + n1_ * (j + n2_ * k); }

    cplx& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[index(i, j, k)]; }
    const cplx& operator()(std::size_t i, std::size_t j, std::size_t k) const { return data_[index(i, j, k)]; }

    cplx& at(std::size_t i, std::size_t j, std::size_t k) {
        check(i, j, k);
        return data_[index(i, j, k)];
    }
    const cplx& at(std::size_t i, std::size_t j, std::size_t k) const {
        check(i, j, k);
        return data_[index(i, j, k)];
    }

    std::span<cplx> data() { return data_; }
    std::span<const cplx> data() const { return data_; }

    MatrixMap frontal(std::size_t k) {
        check_slice(k);
        return MatrixMap(data_.data() + k * slice_size(), Eigen::Index(n1_), Eigen::Index(n2_));
    }
    ConstMatrixMap frontal(std::size_t k) const {
        check_slice(k);
        return ConstMatrixMap(data_.data() + k * slice_size(), Eigen::Index(n1_), Eigen::Index(n2_));
    }

    /// All tubes as rows: an (n1*n2) x n3 matrix whose row (i + n1*j) is tube (i,j).
    MatrixMap tubes() { return MatrixMap(data_.data(), Eigen::Index(slice_size()), Eigen::Index(n3_)); }
    ConstMatrixMap tubes() const {
        return ConstMatrixMap(data_.data(), Eigen::Index(slice_size()), Eigen::Index(n3_));
    }

    /// Horizontal slice A(i,:,:) as an n2 x n3 matrix.
    Matrix horizontal(std::size_t i) const {
        if (i >= n1_) throw std::out_of_range("horizontal slice index out of range");
        Matrix m(n2_, n3_);
        for (std::size_t k = 0; k < n3_; ++k)
            for (std::size_t j = 0; j < n2_; ++j) m(j, k) = (*this)(i, j, k);
        return m;
    }

    /// Lateral slice A(:,j,:) as an n1 x n3 matrix.
    Matrix lateral(std::size_t j) const {
        if (j >= n2_) throw std::out_of_range("lateral slice index out of range");
        Matrix m(n1_, n3_);
        for (std::size_t k = 0; k < n3_; ++k)
            for (std::size_t i = 0; i < n1_; ++i) m(i, k) = (*this)(i, j, k);
        return m;
    }

    Vector tube(std::size_t i, std::size_t j) const {
        check(i, j, 0);
        Vector v(n3_);
        for (std::size_t k = 0; k < n3_; ++k) v(k) = (*this)(i, j, k);
        return v;
    }

    void set_tube(std::size_t i, std::size_t j, const Vector& v) {
        check(i, j, 0);
        if (std::size_t(v.size()) != n3_) throw dimension_error("tube length mismatch");
        for (std::size_t k = 0; k < n3_; ++k) (*this)(i, j, k) = v(k);
    }

    void set_zero() { std::fill(data_.begin(), data_.end(), cplx(0.0, 0.0)); }

    /// True when every imaginary part is exactly zero.
    bool is_real() const {
        return std::all_of(data_.begin(), data_.end(), [](const cplx& z) { return z.imag() == 0.0; });
    }

    double max_abs_imag() const {
        double m = 0.0;
        for (const auto& z : data_) m = std::max(m, std::abs(z.imag()));
        return m;
    }

    Tensor3& operator+=(const Tensor3& o) {
        require_same(o);
        for (std::size_t n = 0; n < data_.size(); ++n) data_[n] += o.data_[n];
        return *this;
    }
    Tensor3& operator-=(const Tensor3& o) {
        require_same(o);
        for (std::size_t n = 0; n < data_.size(); ++n) data_[n] -= o.data_[n];
        return *this;
    }
    Tensor3& operator*=(cplx s) {
        for (auto& z : data_) z *= s;
        return *this;
    }

    friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
    friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
    friend Tensor3 operator*(cplx s, Tensor3 a) { return a *= s; }
    friend Tensor3 operator*(Tensor3 a, cplx s) { return a *= s; }

    friend bool operator==(const Tensor3& a, const Tensor3& b) {
        return a.same_shape(b) && a.data_ == b.data_;
    }

    std::string shape_string() const {
        return std::to_string(n1_) + "x" + std::to_string(n2_) + "x" + std::to_string(n3_);
    }

private:
    void check(std::size_t i, std::size_t j, std::size_t k) const {
        if (i >= n1_ || j >= n2_ || k >= n3_)
            throw std::out_of_range("Tensor3 index (" + std::to_string(i) + "," + std::to_string(j) + "," +
                                    std::to_string(k) + ") outside " + shape_string());
    }
    void check_slice(std::size_t k) const {
        if (k >= n3_) throw std::out_of_range("frontal slice index out of range");
    }
    void require_same(const Tensor3& o) const {
        if (!same_shape(o)) throw dimension_error("shape mismatch: " + shape_string() + " vs " + o.shape_string());
    }

    std::size_t n1_ = 0, n2_ = 0, n3_ = 0;
    std::vector<cplx> data_;
};

/// Horizontal concatenation of frontal slices: [A(:,:,1) | ... | A(:,:,n3)].
///
/// With this storage order the flattened n1 x (n2*n3) matrix has the same
/// column-major memory image as the tensor, so this is a copy.
inline Matrix flatten(const Tensor3& t) {
    return ConstMatrixMap(t.data().data(), Eigen::Index(t.n1()), Eigen::Index(t.n2() * t.n3()));
}

inline Tensor3 unflatten(const Matrix& m, std::size_t n1, std::size_t n2, std::size_t n3) {
    if (std::size_t(m.rows()) != n1 || std::size_t(m.cols()) != n2 * n3)
        throw dimension_error("unflatten: matrix is not n1 x n2*n3");
    return Tensor3(n1, n2, n3, std::vector<cplx>(m.data(), m.data() + m.size()));
}

/// n1 x n3 matrix to the lateral slice n1 x 1 x n3; column k becomes A(:,1,k).
inline Tensor3 twist(const Matrix& m) {
    return Tensor3(std::size_t(m.rows()), 1, std::size_t(m.cols()), std::vector<cplx>(m.data(), m.data() + m.size()));
}

inline Matrix squeeze(const Tensor3& t) {
    if (t.n2() != 1) throw dimension_error("squeeze requires n2 == 1");
    return ConstMatrixMap(t.data().data(), Eigen::Index(t.n1()), Eigen::Index(t.n3()));
}

/// Mode-3 unfolding: n3 x (n1*n2) with tube (i,j) as column i + n1*j.
inline Matrix unfold3(const Tensor3& t) { return t.tubes().transpose(); }

inline Tensor3 fold3(const Matrix& m, std::size_t n1, std::size_t n2, std::size_t n3) {
    if (std::size_t(m.rows()) != n3 || std::size_t(m.cols()) != n1 * n2)
        throw dimension_error("fold3: matrix is not n3 x n1*n2");
    Tensor3 t(n1, n2, n3);
    t.tubes() = m.transpose();
    return t;
}

inline double squared_norm(std::span<const cplx> v) {
    double s = 0.0;
    for (const auto& z : v) s += std::norm(z);
    return s;
}

inline double frobenius_norm(const Tensor3& t) { return std::sqrt(squared_norm(t.data())); }

inline Tensor3 real_tensor(std::size_t n1, std::size_t n2, std::size_t n3, std::span<const double> values) {
    if (values.size() != n1 * n2 * n3) throw dimension_error("real_tensor: value count mismatch");
    std::vector<cplx> data(values.begin(), values.end());
    return Tensor3(n1, n2, n3, std::move(data));
}

/// Wraps a matrix as an m x n x 1 tensor.
inline Tensor3 as_tensor(const Matrix& m) {
    return Tensor3(std::size_t(m.rows()), std::size_t(m.cols()), 1, std::vector<cplx>(m.data(), m.data() + m.size()));
}

} // namespace starcomplete
