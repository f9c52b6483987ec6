#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <tuple>

#include <fftw3.h>

#include "errors.hpp"
#include "tensor.hpp"

namespace starcomplete {

enum class TransformKind { identity, dft, dct, matrix };

inline std::string to_string(TransformKind k) {
    switch (k) {
    case TransformKind::identity: return "identity";
    case TransformKind::dft: return "dft";
    case TransformKind::dct: return "dct";
    case TransformKind::matrix: return "matrix";
    }
    return "?";
}

namespace detail {

// FFTW planning is not thread-safe; execution on new arrays is. Plans are cached
// per (length, batch, direction) and created with FFTW_UNALIGNED so any buffer
// can be passed to fftw_execute_dft.
class FftPlanCache {
public:
    static FftPlanCache& instance() {
        static FftPlanCache cache;
        return cache;
    }

    fftw_plan strided(int n, int howmany, int sign) {
        std::lock_guard lock(mutex_);
        auto key = std::make_tuple(n, howmany, sign);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        // Plan on scratch buffers; FFTW_ESTIMATE never touches their contents.
        auto* buf = fftw_alloc_complex(std::size_t(n) * std::size_t(howmany));
        int dims[1] = {n};
        fftw_plan plan = fftw_plan_many_dft(1, dims, howmany, buf, nullptr, howmany, 1, buf, nullptr, howmany, 1,
                                            sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(buf);
        plans_.emplace(key, plan);
        return plan;
    }

    FftPlanCache(const FftPlanCache&) = delete;
    FftPlanCache& operator=(const FftPlanCache&) = delete;

private:
    FftPlanCache() = default;
    ~FftPlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    std::mutex mutex_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

} // namespace detail

/// Mode-3 transform A -> A x_3 M with M = c W, W unitary.
///
/// The DFT is unnormalized (c = sqrt(n3)) and its inverse carries 1/n3. The DCT
/// is the orthonormal DCT-II (c = 1). Explicit matrices are checked for
/// unitarity up to scale when constructed.
class Transform {
public:
    static Transform identity(std::size_t n3) { return Transform(TransformKind::identity, n3, 1.0, Matrix()); }
    static Transform dft(std::size_t n3) {
        return Transform(TransformKind::dft, n3, std::sqrt(double(n3)), Matrix());
    }
    static Transform dct(std::size_t n3) {
        Matrix m(n3, n3);
        const double n = double(n3);
        for (std::size_t k = 0; k < n3; ++k) {
            const double alpha = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
            for (std::size_t j = 0; j < n3; ++j)
                m(k, j) = alpha * std::cos(std::numbers::pi * (2.0 * double(j) + 1.0) * double(k) / (2.0 * n));
        }
        return Transform(TransformKind::dct, n3, 1.0, std::move(m));
    }

    /// Throws contract_error unless (1/|c|) M has orthonormal columns to `tol`.
    static Transform from_matrix(const Matrix& m, double tol = 1e-10) {
        if (m.rows() != m.cols() || m.rows() == 0) throw dimension_error("transform matrix must be square");
        const auto n3 = std::size_t(m.rows());
        const Matrix gram = m.adjoint() * m;
        const double c2 = gram.trace().real() / double(n3);
        if (!(c2 > 0.0)) throw contract_error("transform matrix is zero");
        const double dev = (gram / c2 - Matrix::Identity(m.rows(), m.cols())).norm();
        if (!(dev <= tol)) throw contract_error("transform matrix is not a scalar multiple of a unitary matrix");
        return Transform(TransformKind::matrix, n3, std::sqrt(c2), m);
    }

    /// Parses "dft", "dct", "identity". Matrix transforms are built by the caller.
    static Transform from_name(const std::string& name, std::size_t n3) {
        if (name == "dft") return dft(n3);
        if (name == "dct") return dct(n3);
        if (name == "identity") return identity(n3);
        throw contract_error("unknown transform '" + name + "'");
    }

    TransformKind kind() const { return kind_; }
    std::size_t n3() const { return n3_; }
    /// |c| for M = c W; c is taken real and positive.
    double scale() const { return scale_; }
    double scale_squared() const { return scale_ * scale_; }
    bool is_dft() const { return kind_ == TransformKind::dft; }

    /// Dense M (materialized on demand for identity and DFT).
    Matrix matrix() const {
        switch (kind_) {
        case TransformKind::identity: return Matrix::Identity(Eigen::Index(n3_), Eigen::Index(n3_));
        case TransformKind::dft: {
            Matrix m(n3_, n3_);
            for (std::size_t k = 0; k < n3_; ++k)
                for (std::size_t j = 0; j < n3_; ++j) {
                    const double ang = -2.0 * std::numbers::pi * double((k * j) % n3_) / double(n3_);
                    m(k, j) = cplx(std::cos(ang), std::sin(ang));
                }
            return m;
        }
        default: return matrix_;
        }
    }

    Tensor3 apply(const Tensor3& t) const {
        Tensor3 out = t;
        apply_inplace(out);
        return out;
    }

    Tensor3 apply_inverse(const Tensor3& t) const {
        Tensor3 out = t;
        apply_inverse_inplace(out);
        return out;
    }

    void apply_inplace(Tensor3& t) const { run(t, false); }
    void apply_inverse_inplace(Tensor3& t) const { run(t, true); }

    Vector apply_tube(const Vector& tube) const {
        if (std::size_t(tube.size()) != n3_) throw dimension_error("tube length does not match transform size");
        Tensor3 t(1, 1, n3_);
        for (std::size_t k = 0; k < n3_; ++k) t(0, 0, k) = tube(Eigen::Index(k));
        run(t, false);
        return t.tube(0, 0);
    }

    Vector apply_inverse_tube(const Vector& tube) const {
        if (std::size_t(tube.size()) != n3_) throw dimension_error("tube length does not match transform size");
        Tensor3 t(1, 1, n3_);
        for (std::size_t k = 0; k < n3_; ++k) t(0, 0, k) = tube(Eigen::Index(k));
        run(t, true);
        return t.tube(0, 0);
    }

private:
    Transform(TransformKind kind, std::size_t n3, double scale, Matrix m)
        : kind_(kind), n3_(n3), scale_(scale), matrix_(std::move(m)) {
        if (n3 == 0) throw dimension_error("transform size must be positive");
        if (kind_ == TransformKind::dct) inverse_ = matrix_.transpose();
        if (kind_ == TransformKind::matrix) inverse_ = matrix_.adjoint() / scale_squared();
    }

    void run(Tensor3& t, bool inverse) const {
        if (t.n3() != n3_) throw dimension_error("tensor n3 does not match transform size");
        switch (kind_) {
        case TransformKind::identity: return;
        case TransformKind::dft: {
            const int batch = int(t.slice_size());
            fftw_plan plan =
                detail::FftPlanCache::instance().strided(int(n3_), batch, inverse ? FFTW_BACKWARD : FFTW_FORWARD);
            auto* buf = reinterpret_cast<fftw_complex*>(t.data().data());
            fftw_execute_dft(plan, buf, buf);
            if (inverse) {
                const double s = 1.0 / double(n3_);
                for (auto& z : t.data()) z *= s;
            }
            return;
        }
        case TransformKind::dct:
        case TransformKind::matrix: {
            // tubes() is unfold3 transposed, so M * unfold3 becomes tubes * M^T.
            const Matrix& m = inverse ? inverse_ : matrix_;
            Matrix out = t.tubes() * m.transpose();
            t.tubes() = out;
            return;
        }
        }
    }

    TransformKind kind_;
    std::size_t n3_;
    double scale_;
    Matrix matrix_;
    Matrix inverse_;
};

} // namespace starcomplete
