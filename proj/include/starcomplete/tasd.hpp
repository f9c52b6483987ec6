#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "asd.hpp"
#include "errors.hpp"
#include "mstar.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "sampling.hpp"
#include "tensor.hpp"
#include "transform.hpp"

namespace starcomplete {

/// Z = X *_M Y with X n1 x t x n3 and Y t x n2 x n3 (spatial domain).
struct TensorFactorPair {
    Tensor3 X;
    Tensor3 Y;

    std::size_t t() const { return X.n2(); }
    Tensor3 product(const Transform& m) const { return mprod(X, Y, m); }
};

/// Gaussian spatial-domain factors scaled so ||X *_M Y||_F = target_norm.
inline TensorFactorPair random_tensor_factors(std::size_t n1, std::size_t n2, std::size_t n3, std::size_t t,
                                              double target_norm, const Transform& m, CounterRng& rng, bool complex) {
    if (t == 0) throw contract_error("t-rank must be at least 1");
    TensorFactorPair f{Tensor3(n1, t, n3), Tensor3(t, n2, n3)};
    for (auto& z : f.X.data()) z = complex ? rng.complex_normal() : cplx(rng.normal(), 0.0);
    for (auto& z : f.Y.data()) z = complex ? rng.complex_normal() : cplx(rng.normal(), 0.0);
    const double pn = frobenius_norm(f.product(m));
    if (pn > 0.0 && target_norm > 0.0) {
        const double s = std::sqrt(target_norm / pn);
        const double balance = std::sqrt(frobenius_norm(f.Y) / frobenius_norm(f.X));
        f.X *= s * balance;
        f.Y *= s / balance;
    }
    return f;
}

struct TasdResult {
    TensorFactorPair factors;
    std::vector<TraceRow> trace;
    std::vector<double> objective;  ///< f after each half-step (when recorded)
    StopReason reason = StopReason::max_iterations;
    std::size_t iterations = 0;
    double relative_residual = 0.0;
    bool slice_kernel = false;  ///< tube-complete fast path was used
};

/// f(X,Y) = 0.5 ||P_Omega(D - X *_M Y)||_F^2, evaluated directly.
inline double tasd_objective(const Tensor3& d, const SamplingPattern& omega, const Tensor3& x, const Tensor3& y,
                             const Transform& m) {
    return 0.5 * squared_norm(omega.project(d - mprod(x, y, m)).data());
}

/// Reference gradients of f built from the generic *_M operations.
struct TasdGradients {
    Tensor3 residual;  ///< P_Omega(D - X*Y)
    Tensor3 grad_x;    ///< -R * Y^H
    Tensor3 grad_y;    ///< -X^H * R
};

inline TasdGradients tasd_gradients(const Tensor3& d, const SamplingPattern& omega, const Tensor3& x,
                                    const Tensor3& y, const Transform& m) {
    TasdGradients g;
    g.residual = omega.project(d - mprod(x, y, m));
    g.grad_x = -1.0 * mprod(g.residual, conj_transpose(y, m), m);
    g.grad_y = -1.0 * mprod(conj_transpose(x, m), g.residual, m);
    return g;
}

struct GradientCheck {
    double analytic = 0.0;  ///< Re <grad f, E>
    double numeric = 0.0;   ///< central difference of f along E
    double relative_error = 0.0;
};

/// Compares the directional derivative along (ex, ey) with a central difference of step h.
/// The error is relative to max(|analytic|, |numeric|) and is 0 when both vanish.
inline GradientCheck tasd_gradient_check(const Tensor3& d, const SamplingPattern& omega, const TensorFactorPair& at,
                                         const TensorFactorPair& dir, const Transform& m, double h = 1e-5) {
    if (!at.X.same_shape(dir.X) || !at.Y.same_shape(dir.Y)) throw dimension_error("gradient check: direction shape");
    const TasdGradients g = tasd_gradients(d, omega, at.X, at.Y, m);
    GradientCheck out;
    out.analytic = tip(g.grad_x, dir.X, m).real() + tip(g.grad_y, dir.Y, m).real();
    const double fp = tasd_objective(d, omega, at.X + cplx(h) * dir.X, at.Y + cplx(h) * dir.Y, m);
    const double fm = tasd_objective(d, omega, at.X - cplx(h) * dir.X, at.Y - cplx(h) * dir.Y, m);
    out.numeric = (fp - fm) / (2.0 * h);
    const double scale = std::max(std::abs(out.analytic), std::abs(out.numeric));
    out.relative_error = scale > 0.0 ? std::abs(out.analytic - out.numeric) / scale : 0.0;
    return out;
}

/// Global objective and its transform-domain slice decomposition.
struct ObjectiveSplit {
    double global = 0.0;               ///< 0.5 ||P(D - X*Y)||^2
    std::vector<double> slices;        ///< 0.5 ||Dhat_k - Pbar(Xhat_k Yhat_k)||^2
    double scaled_sum = 0.0;           ///< sum(slices) / |c|^2
};

inline ObjectiveSplit decompose_objective(const Tensor3& d, const SamplingPattern& omega,
                                          const TensorFactorPair& pair, const Transform& m) {
    const SliceMask mask = slice_mask(omega);
    ObjectiveSplit out;
    out.global = tasd_objective(d, omega, pair.X, pair.Y, m);
    const Tensor3 dh = m.apply(omega.project(d));
    const Tensor3 zh = slicewise_product(m.apply(pair.X), m.apply(pair.Y));
    double sum = 0.0;
    for (std::size_t k = 0; k < d.n3(); ++k) {
        const double v = 0.5 * mask.project(Matrix(dh.frontal(k) - zh.frontal(k))).squaredNorm();
        out.slices.push_back(v);
        sum += v;
    }
    out.scaled_sum = sum / m.scale_squared();
    return out;
}

namespace detail {

// TASD for tube-complete patterns. P_Omega commutes with the transform, so the
// residual lives on the common slice mask in the transform domain and no
// transforms are needed between refreshes. Norms are divided by |c|^2 so every
// reported quantity is in the spatial metric.
class TasdSliceKernel {
public:
    TasdSliceKernel(const Tensor3& dhat, const SliceMask& mask, const Tensor3& xhat, const Tensor3& yhat, double c2)
        : n1_(dhat.n1()), n2_(dhat.n2()), n3_(dhat.n3()), t_(xhat.n2()), c2_(c2) {
        for (std::size_t idx = 0; idx < mask.mask.size(); ++idx) {
            if (!mask.mask[idx]) continue;
            row_.push_back(std::uint32_t(idx % n1_));
            col_.push_back(std::uint32_t(idx / n1_));
        }
        m_ = row_.size();
        d_.resize(m_ * n3_);
        for (std::size_t k = 0; k < n3_; ++k)
            for (std::size_t w = 0; w < m_; ++w) d_[k * m_ + w] = dhat(row_[w], col_[w], k);
        x_.resize(n3_ * n1_ * t_);
        y_.resize(n3_ * n2_ * t_);
        for (std::size_t k = 0; k < n3_; ++k) {
            for (std::size_t i = 0; i < n1_; ++i)
                for (std::size_t l = 0; l < t_; ++l) x_[xi(k, i) + l] = xhat(i, l, k);
            for (std::size_t j = 0; j < n2_; ++j)
                for (std::size_t l = 0; l < t_; ++l) y_[yi(k, j) + l] = yhat(l, j, k);
        }
        gx_.resize(x_.size());
        gy_.resize(y_.size());
        res_.resize(d_.size());
        h_.resize(d_.size());
        refresh();
    }

    void refresh() {
        for (std::size_t k = 0; k < n3_; ++k)
            for (std::size_t w = 0; w < m_; ++w)
                res_[k * m_ + w] = d_[k * m_ + w] - dot(&x_[xi(k, row_[w])], &y_[yi(k, col_[w])]);
    }

    double residual_sq() const { return squared_norm(res_) / c2_; }

    /// Transform-domain residual on the slice mask, slice-major.
    std::span<const cplx> residual() const { return res_; }

    double step_x() {
        std::fill(gx_.begin(), gx_.end(), cplx(0.0, 0.0));
        for (std::size_t k = 0; k < n3_; ++k)
            for (std::size_t w = 0; w < m_; ++w) {
                const cplx rw = res_[k * m_ + w];
                cplx* g = &gx_[xi(k, row_[w])];
                const cplx* yc = &y_[yi(k, col_[w])];
                for (std::size_t l = 0; l < t_; ++l) g[l] -= rw * std::conj(yc[l]);
            }
        const double gnorm = squared_norm(gx_) / c2_;
        if (gnorm == 0.0) return 0.0;
        for (std::size_t k = 0; k < n3_; ++k)
            for (std::size_t w = 0; w < m_; ++w) h_[k * m_ + w] = dot(&gx_[xi(k, row_[w])], &y_[yi(k, col_[w])]);
        const double hnorm = squared_norm(h_) / c2_;
        if (hnorm == 0.0) return 0.0;
        const double eta = gnorm / hnorm;
        for (std::size_t n = 0; n < x_.size(); ++n) x_[n] -= eta * gx_[n];
        for (std::size_t n = 0; n < res_.size(); ++n) res_[n] += eta * h_[n];
        return eta;
    }

    double step_y() {
        std::fill(gy_.begin(), gy_.end(), cplx(0.0, 0.0));
        for (std::size_t k = 0; k < n3_; ++k)
            for (std::size_t w = 0; w < m_; ++w) {
                const cplx rw = res_[k * m_ + w];
                cplx* g = &gy_[yi(k, col_[w])];
                const cplx* xr = &x_[xi(k, row_[w])];
                for (std::size_t l = 0; l < t_; ++l) g[l] -= std::conj(xr[l]) * rw;
            }
        const double gnorm = squared_norm(gy_) / c2_;
        if (gnorm == 0.0) return 0.0;
        for (std::size_t k = 0; k < n3_; ++k)
            for (std::size_t w = 0; w < m_; ++w) h_[k * m_ + w] = dot(&x_[xi(k, row_[w])], &gy_[yi(k, col_[w])]);
        const double hnorm = squared_norm(h_) / c2_;
        if (hnorm == 0.0) return 0.0;
        const double eta = gnorm / hnorm;
        for (std::size_t n = 0; n < y_.size(); ++n) y_[n] -= eta * gy_[n];
        for (std::size_t n = 0; n < res_.size(); ++n) res_[n] += eta * h_[n];
        return eta;
    }

    /// Transform-domain factors.
    void export_factors(Tensor3& xhat, Tensor3& yhat) const {
        for (std::size_t k = 0; k < n3_; ++k) {
            for (std::size_t i = 0; i < n1_; ++i)
                for (std::size_t l = 0; l < t_; ++l) xhat(i, l, k) = x_[xi(k, i) + l];
            for (std::size_t j = 0; j < n2_; ++j)
                for (std::size_t l = 0; l < t_; ++l) yhat(l, j, k) = y_[yi(k, j) + l];
        }
    }

private:
    std::size_t xi(std::size_t k, std::size_t i) const { return (k * n1_ + i) * t_; }
    std::size_t yi(std::size_t k, std::size_t j) const { return (k * n2_ + j) * t_; }
    cplx dot(const cplx* a, const cplx* b) const {
        cplx s(0.0, 0.0);
        for (std::size_t l = 0; l < t_; ++l) s += a[l] * b[l];
        return s;
    }

    std::size_t n1_, n2_, n3_, t_, m_ = 0;
    double c2_;
    std::vector<std::uint32_t> row_, col_;
    std::vector<cplx> d_, res_, h_, x_, y_, gx_, gy_;
};

// TASD for arbitrary patterns: factors stay in the transform domain, the
// residual is kept spatially (P_Omega does not commute with M) and each
// half-step costs one forward and one inverse transform.
class TasdDenseKernel {
public:
    TasdDenseKernel(const Tensor3& d, const SamplingPattern& omega, const Tensor3& xhat, const Tensor3& yhat,
                    const Transform& m)
        : d_(d), omega_(omega), m_(m), xhat_(xhat), yhat_(yhat) {
        refresh();
    }

    void refresh() {
        Tensor3 z = slicewise_product(xhat_, yhat_);
        m_.apply_inverse_inplace(z);
        r_ = omega_.project(d_ - z);
    }

    double residual_sq() const { return squared_norm(r_.data()); }

    /// Spatial residual P_Omega(D - X*Y).
    std::span<const cplx> residual() const { return r_.data(); }

    double step_x() {
        const Tensor3 rh = m_.apply(r_);
        Tensor3 g = slicewise_product(rh, slicewise_adjoint(yhat_));
        g *= cplx(-1.0);
        return take(g, slicewise_product(g, yhat_), xhat_);
    }

    double step_y() {
        const Tensor3 rh = m_.apply(r_);
        Tensor3 g = slicewise_product(slicewise_adjoint(xhat_), rh);
        g *= cplx(-1.0);
        return take(g, slicewise_product(xhat_, g), yhat_);
    }

    const Tensor3& xhat() const { return xhat_; }
    const Tensor3& yhat() const { return yhat_; }

private:
    double take(const Tensor3& g, Tensor3 gy, Tensor3& target) {
        const double gnorm = squared_norm(g.data()) / m_.scale_squared();
        if (gnorm == 0.0) return 0.0;
        m_.apply_inverse_inplace(gy);
        const Tensor3 h = omega_.project(gy);
        const double hnorm = squared_norm(h.data());
        if (hnorm == 0.0) return 0.0;
        const double eta = gnorm / hnorm;
        auto tv = target.data();
        const auto gv = g.data();
        for (std::size_t n = 0; n < tv.size(); ++n) tv[n] -= eta * gv[n];
        auto rv = r_.data();
        const auto hv = h.data();
        for (std::size_t n = 0; n < rv.size(); ++n) rv[n] += eta * hv[n];
        return eta;
    }

    const Tensor3& d_;
    const SamplingPattern& omega_;
    const Transform& m_;
    Tensor3 xhat_, yhat_, r_;
};

} // namespace detail

/// Tensor ASD: alternating exact-line-search steps on X and Y under *_M.
///
/// D is projected onto Omega before use. Tube-complete patterns take the
/// transform-domain slice kernel; other patterns keep a spatial residual.
inline TasdResult tasd(const Tensor3& d, const SamplingPattern& omega, const TensorFactorPair& init,
                       const Transform& m, const AsdConfig& cfg = {}) {
    if (!omega.matches(d)) throw dimension_error("tasd: data " + d.shape_string() + " does not match the pattern");
    if (m.n3() != d.n3()) throw dimension_error("tasd: transform size does not match n3");
    const std::size_t t = init.t();
    if (t == 0) throw contract_error("tasd: t-rank must be at least 1");
    if (init.X.n1() != d.n1() || init.X.n3() != d.n3() || init.Y.n1() != t || init.Y.n2() != d.n2() ||
        init.Y.n3() != d.n3())
        throw dimension_error("tasd: initial factors are not conformal with the data");

    const Tensor3 dp = omega.project(d);
    const double dnorm = frobenius_norm(dp);
    TasdResult out;
    Tensor3 xhat = m.apply(init.X);
    Tensor3 yhat = m.apply(init.Y);
    if (omega.tube_complete()) {
        out.slice_kernel = true;
        detail::TasdSliceKernel kernel(m.apply(dp), slice_mask(omega), xhat, yhat, m.scale_squared());
        AsdResult run;
        detail::descend(kernel, dnorm, cfg, run);
        kernel.export_factors(xhat, yhat);
        out.trace = std::move(run.trace);
        out.objective = std::move(run.objective);
        out.reason = run.reason;
        out.iterations = run.iterations;
        out.relative_residual = run.relative_residual;
    } else {
        detail::TasdDenseKernel kernel(dp, omega, xhat, yhat, m);
        AsdResult run;
        detail::descend(kernel, dnorm, cfg, run);
        xhat = kernel.xhat();
        yhat = kernel.yhat();
        out.trace = std::move(run.trace);
        out.objective = std::move(run.objective);
        out.reason = run.reason;
        out.iterations = run.iterations;
        out.relative_residual = run.relative_residual;
    }
    m.apply_inverse_inplace(xhat);
    m.apply_inverse_inplace(yhat);
    out.factors = {std::move(xhat), std::move(yhat)};
    return out;
}

// ---------------------------------------------------------------------------
// TASDII
// ---------------------------------------------------------------------------

enum class SliceStatus { completed, zeroed_by_threshold, zeroed_by_rule, warm_restarted };

inline std::string to_string(SliceStatus s) {
    switch (s) {
    case SliceStatus::completed: return "completed";
    case SliceStatus::zeroed_by_threshold: return "zeroed-by-threshold";
    case SliceStatus::zeroed_by_rule: return "zeroed-by-rule";
    case SliceStatus::warm_restarted: return "warm-restarted";
    }
    return "?";
}

struct TasdiiConfig {
    double gamma = 1.0;
    LoopedConfig looped;               ///< per-slice settings; looped.seed is the base seed
    bool zero_slice_rule = true;
    std::vector<std::size_t> skip;     ///< zero-based slices forced to zero
    std::size_t threads = 1;
    bool conjugate_symmetry = true;    ///< mirror conjugate slice pairs for real data under the DFT
};

struct SliceCompletionRecord {
    std::size_t k = 0;  ///< one-based slice number
    std::size_t rho_initial = 0;
    std::size_t rho_reduced = 0;
    SliceStatus status = SliceStatus::completed;
    double slice_rse_db = 0.0;  ///< sampled-entry error against Dhat_k; -320 for an exact fit
    std::size_t iterations = 0;
};

/// Seed of the per-slice LoopedASD for zero-based slice k.
inline std::uint64_t tasdii_slice_seed(std::uint64_t seed, std::size_t k) { return derive_seed(seed, 0x7A5D, k); }

/// Stage-1 output: one LoopedASD per solved slice, before any truncation.
struct TasdiiStage1 {
    std::size_t n1 = 0, n2 = 0, n3 = 0;
    bool dft = false;
    bool mirrored = false;                  ///< conjugate pairs were copied instead of solved
    std::vector<std::size_t> source;        ///< slice whose completion slice k reuses (k itself when solved)
    Transform transform = Transform::identity(1);
    std::vector<Observations> observations;  ///< sampled entries of Dhat_k (empty for mirrored slices)
    std::vector<LowRankSvd> svd;            ///< SVD of the stage-1 completion, rank rho_k
    std::vector<std::size_t> rho;           ///< rho_k after the global 1e-10 cutoff
    std::vector<std::size_t> iterations;
    std::vector<std::uint8_t> skipped;
    std::vector<std::uint8_t> failed;
};

struct TasdiiResult {
    Tensor3 Z;
    std::vector<SliceCompletionRecord> records;
    RankProfile ranks;  ///< multirank after truncation and the zero-slice rule
    bool all_zero = false;
    std::string warning;
};

/// Slices zeroed by the neighbor rule, decided simultaneously from `rho`.
///
/// Linear transforms: neighbors k-1 and k+1 where they exist. Under the DFT the
/// neighbors wrap cyclically, which keeps the rule symmetric across conjugate
/// pairs, and slice 0 (the mean) is never zeroed.
inline std::vector<std::size_t> zero_slice_rule(const std::vector<std::size_t>& rho, bool dft) {
    const std::size_t n3 = rho.size();
    std::vector<std::size_t> zeroed;
    if (n3 < 2) return zeroed;
    for (std::size_t k = 0; k < n3; ++k) {
        if (rho[k] == 0 || (dft && k == 0)) continue;
        bool isolated = true;
        if (dft) {
            isolated = rho[(k + n3 - 1) % n3] == 0 && rho[(k + 1) % n3] == 0;
        } else {
            if (k > 0 && rho[k - 1] != 0) isolated = false;
            if (k + 1 < n3 && rho[k + 1] != 0) isolated = false;
        }
        if (isolated) zeroed.push_back(k);
    }
    return zeroed;
}

namespace detail {
inline Observations slice_observations(const Tensor3& dhat, std::size_t k, const SliceMask& mask) {
    Observations obs;
    obs.n1 = dhat.n1();
    obs.n = dhat.n2();
    const auto f = dhat.frontal(k);
    for (std::size_t idx = 0; idx < mask.mask.size(); ++idx) {
        if (!mask.mask[idx]) continue;
        obs.row.push_back(std::uint32_t(idx % obs.n1));
        obs.col.push_back(std::uint32_t(idx / obs.n1));
        obs.value.push_back(f.data()[idx]);
    }
    return obs;
}

inline double sampled_rse_db(const Observations& obs, const Matrix& z) {
    double err = 0.0, ref = 0.0;
    for (std::size_t w = 0; w < obs.size(); ++w) {
        err += std::norm(obs.value[w] - z(obs.row[w], obs.col[w]));
        ref += std::norm(obs.value[w]);
    }
    if (err == 0.0) return -320.0;
    if (ref == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(err / ref);
}
} // namespace detail

/// Stage 1: transform, then complete every frontal slice independently by LoopedASD.
inline TasdiiStage1 tasdii_stage1(const Tensor3& d, const SamplingPattern& omega, const Transform& m,
                                  const TasdiiConfig& cfg) {
    if (!omega.matches(d)) throw dimension_error("tasdii: data " + d.shape_string() + " does not match the pattern");
    if (m.n3() != d.n3()) throw dimension_error("tasdii: transform size does not match n3");
    const SliceMask mask = slice_mask(omega);
    if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) throw contract_error("gamma must lie in (0, 1]");

    TasdiiStage1 s;
    s.n1 = d.n1();
    s.n2 = d.n2();
    s.n3 = d.n3();
    s.dft = m.is_dft();
    s.transform = m;
    const Tensor3 dp = omega.project(d);
    s.mirrored = s.dft && cfg.conjugate_symmetry && dp.is_real();
    const Tensor3 dhat = m.apply(dp);

    s.source.resize(s.n3);
    for (std::size_t k = 0; k < s.n3; ++k) s.source[k] = (s.mirrored && 2 * k > s.n3) ? s.n3 - k : k;
    s.skipped.assign(s.n3, 0);
    for (auto k : cfg.skip) {
        if (k >= s.n3) throw contract_error("tasdii: skipped slice " + std::to_string(k + 1) + " out of range");
        s.skipped[k] = 1;
    }
    s.observations.resize(s.n3);
    s.svd.resize(s.n3);
    s.rho.assign(s.n3, 0);
    s.iterations.assign(s.n3, 0);
    s.failed.assign(s.n3, 0);

    std::vector<std::size_t> solved;
    for (std::size_t k = 0; k < s.n3; ++k)
        if (s.source[k] == k) solved.push_back(k);
    for (auto k : solved) s.observations[k] = detail::slice_observations(dhat, k, mask);

    parallel_for(solved.size(), cfg.threads, [&](std::size_t job) {
        const std::size_t k = solved[job];
        if (s.skipped[k]) return;
        LoopedConfig lc = cfg.looped;
        lc.seed = tasdii_slice_seed(cfg.looped.seed, k);
        const LoopedResult r = looped_asd(s.observations[k], lc);
        s.iterations[k] = r.inner_iterations + r.final_run.iterations;
        const double res = r.final_run.relative_residual;
        if (r.rank > 0 && !(std::isfinite(res) && res < 1.0)) {
            s.failed[k] = 1;
            s.svd[k] = low_rank_svd(Matrix(Eigen::Index(s.n1), 0), Matrix(0, Eigen::Index(s.n2)));
            return;
        }
        s.svd[k] = low_rank_svd(r.factors.X, r.factors.Y);
    });

    for (std::size_t k = 0; k < s.n3; ++k) {
        const std::size_t src = s.source[k];
        if (src == k) continue;
        s.svd[k] = {s.svd[src].U.conjugate(), s.svd[src].s, s.svd[src].V.conjugate()};
        s.iterations[k] = s.iterations[src];
        s.failed[k] = s.failed[src];
    }
    // Skipping one side of a conjugate pair zeroes both so the output stays real.
    for (std::size_t k = 0; k < s.n3; ++k)
        if (s.skipped[k]) s.skipped[s.source[k]] = 1;
    for (std::size_t k = 0; k < s.n3; ++k)
        if (s.skipped[s.source[k]]) s.skipped[k] = 1;

    double smax = 0.0;
    for (std::size_t k = 0; k < s.n3; ++k)
        if (!s.skipped[k] && s.svd[k].s.size() > 0) smax = std::max(smax, s.svd[k].s.maxCoeff());
    for (std::size_t k = 0; k < s.n3; ++k) {
        if (s.skipped[k] || smax == 0.0) continue;
        s.rho[k] = std::size_t((s.svd[k].s.array() > kDefaultRankTol * smax).count());
    }
    return s;
}

/// Stages 2-4: global energy truncation, warm-started re-completion of reduced
/// slices, the zero-slice rule and the inverse transform.
inline TasdiiResult tasdii_finish(const TasdiiStage1& s, const TasdiiConfig& cfg) {
    if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) throw contract_error("gamma must lie in (0, 1]");
    const std::size_t n3 = s.n3;

    std::vector<RealVector> values(n3);
    std::size_t total = 0;
    for (std::size_t k = 0; k < n3; ++k) {
        values[k] = s.svd[k].s.head(Eigen::Index(s.rho[k]));
        total += s.rho[k];
    }
    std::vector<std::size_t> rho_star(n3, 0);
    if (total > 0) rho_star = truncate_energy(values, cfg.gamma).ranks.multirank;

    Tensor3 zhat(s.n1, s.n2, n3);
    std::vector<std::size_t> extra(n3, 0);
    std::vector<std::size_t> solved;
    for (std::size_t k = 0; k < n3; ++k)
        if (s.source[k] == k) solved.push_back(k);

    parallel_for(solved.size(), cfg.threads, [&](std::size_t job) {
        const std::size_t k = solved[job];
        const std::size_t r = rho_star[k];
        if (r == 0) return;
        const LowRankSvd& f = s.svd[k];
        const auto ri = Eigen::Index(r);
        if (r == s.rho[k]) {
            zhat.frontal(k) = f.U.leftCols(ri) * f.s.head(ri).cast<cplx>().asDiagonal() * f.V.leftCols(ri).adjoint();
            return;
        }
        const RealVector root = f.s.head(ri).cwiseSqrt();
        const FactorPair init{f.U.leftCols(ri) * root.cast<cplx>().asDiagonal(),
                              root.cast<cplx>().asDiagonal() * f.V.leftCols(ri).adjoint()};
        const AsdResult run = asd(s.observations[k], init, cfg.looped.final);
        extra[k] = run.iterations;
        zhat.frontal(k) = run.factors.product();
    });
    for (std::size_t k = 0; k < n3; ++k) {
        const std::size_t src = s.source[k];
        if (src == k) continue;
        zhat.frontal(k) = zhat.frontal(src).conjugate();
        extra[k] = extra[src];
    }

    std::vector<std::uint8_t> by_rule(n3, 0);
    if (cfg.zero_slice_rule) {
        for (auto k : zero_slice_rule(rho_star, s.dft)) {
            by_rule[k] = 1;
            rho_star[k] = 0;
            zhat.frontal(k).setZero();
        }
    }

    TasdiiResult out;
    for (std::size_t k = 0; k < n3; ++k) {
        SliceCompletionRecord rec;
        rec.k = k + 1;
        rec.rho_initial = s.rho[k];
        rec.rho_reduced = rho_star[k];
        rec.iterations = s.iterations[k] + extra[k];
        if (by_rule[k] || s.skipped[k])
            rec.status = SliceStatus::zeroed_by_rule;
        else if (rho_star[k] == 0)
            rec.status = SliceStatus::zeroed_by_threshold;
        else if (rho_star[k] < s.rho[k])
            rec.status = SliceStatus::warm_restarted;
        else
            rec.status = SliceStatus::completed;
        const std::size_t src = s.source[k];
        rec.slice_rse_db = detail::sampled_rse_db(s.observations[src], src == k ? Matrix(zhat.frontal(k))
                                                                               : Matrix(zhat.frontal(src)));
        out.records.push_back(rec);
    }
    out.ranks = rank_profile(rho_star);
    out.all_zero = out.ranks.implicit_rank == 0;
    if (out.all_zero) out.warning = "every transform-domain slice was zeroed; the completion is the zero tensor";

    s.transform.apply_inverse_inplace(zhat);
    if (s.mirrored)
        for (auto& z : zhat.data()) z = cplx(z.real(), 0.0);
    out.Z = std::move(zhat);
    return out;
}

/// TASDII: per-slice LoopedASD in the transform domain with global energy truncation.
inline TasdiiResult tasdii(const Tensor3& d, const SamplingPattern& omega, const Transform& m,
                           const TasdiiConfig& cfg) {
    return tasdii_finish(tasdii_stage1(d, omega, m, cfg), cfg);
}

} // namespace starcomplete
