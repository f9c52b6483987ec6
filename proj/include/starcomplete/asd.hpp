#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "errors.hpp"
#include "rng.hpp"
#include "sampling.hpp"
#include "tensor.hpp"

namespace starcomplete {

/// Low-rank factors Z = X * Y with X n1 x r and Y r x N. r = 0 is the zero matrix.
struct FactorPair {
    Matrix X;
    Matrix Y;

    static FactorPair empty(std::size_t n1, std::size_t n) {
        return {Matrix(Eigen::Index(n1), 0), Matrix(0, Eigen::Index(n))};
    }

    std::size_t rank() const { return std::size_t(X.cols()); }
    std::size_t rows() const { return std::size_t(X.rows()); }
    std::size_t cols() const { return std::size_t(Y.cols()); }

    Matrix product() const {
        if (rank() == 0) return Matrix::Zero(X.rows(), Y.cols());
        return X * Y;
    }
};

/// Stopping rules shared by ASD and TASD.
struct AsdConfig {
    std::size_t max_iters = 5000;      ///< i_stop
    double tol_residual = 1e-4;        ///< eps_con on ||R|| / ||D||
    double tol_stall = 1e-6;           ///< eps_ES on the change of relative residual over the window
    std::size_t refresh_period = 100;  ///< exact residual recomputation period (0 disables)
    bool record_objective = false;     ///< keep f after every half-step

    static constexpr std::size_t stall_window = 50;
};

enum class StopReason { max_iterations, residual_tolerance, stalled, stationary };

inline std::string to_string(StopReason r) {
    switch (r) {
    case StopReason::max_iterations: return "max-iterations";
    case StopReason::residual_tolerance: return "residual-tolerance";
    case StopReason::stalled: return "stalled";
    case StopReason::stationary: return "stationary";
    }
    return "?";
}

struct TraceRow {
    std::size_t iter = 0;
    double relative_residual = 0.0;
    double eta_x = 0.0;
    double eta_y = 0.0;
};

struct AsdResult {
    FactorPair factors;
    std::vector<TraceRow> trace;
    std::vector<double> objective;  ///< f = 0.5 ||R||^2 at start and after each half-step (when recorded)
    StopReason reason = StopReason::max_iterations;
    std::size_t iterations = 0;
    double relative_residual = 0.0;
};

/// Sampled entries of an n1 x N matrix as coordinate lists.
struct Observations {
    std::size_t n1 = 0, n = 0;
    std::vector<std::uint32_t> row, col;
    std::vector<cplx> value;

    std::size_t size() const { return value.size(); }

    static Observations from(const Matrix& d, const SamplingPattern& omega) {
        if (omega.n3() != 1 || std::size_t(d.rows()) != omega.n1() || std::size_t(d.cols()) != omega.n2())
            throw dimension_error("observations: data does not match the matrix pattern");
        Observations obs;
        obs.n1 = std::size_t(d.rows());
        obs.n = std::size_t(d.cols());
        const auto& mask = omega.mask();
        for (std::size_t idx = 0; idx < mask.size(); ++idx) {
            if (!mask[idx]) continue;
            obs.row.push_back(std::uint32_t(idx % obs.n1));
            obs.col.push_back(std::uint32_t(idx / obs.n1));
            obs.value.push_back(d.data()[idx]);
        }
        return obs;
    }

    /// Entries selected by `keep` (positions into this list).
    Observations subset(std::span<const std::size_t> keep) const {
        Observations o;
        o.n1 = n1;
        o.n = n;
        o.row.reserve(keep.size());
        o.col.reserve(keep.size());
        o.value.reserve(keep.size());
        for (auto s : keep) {
            o.row.push_back(row[s]);
            o.col.push_back(col[s]);
            o.value.push_back(value[s]);
        }
        return o;
    }

    double norm() const { return std::sqrt(squared_norm(value)); }

    bool is_real() const {
        return std::all_of(value.begin(), value.end(), [](const cplx& z) { return z.imag() == 0.0; });
    }
};

/// R' = R + eta * P_Omega(G Y): the residual after the step X <- X - eta G.
inline Matrix residual_update(const Matrix& r, double eta, const Matrix& projected_gy) {
    if (r.rows() != projected_gy.rows() || r.cols() != projected_gy.cols())
        throw dimension_error("residual_update: shape mismatch");
    return r + eta * projected_gy;
}

/// Dense reference quantities of f(X,Y) = 0.5 ||D - P(XY)||^2, for tests and diagnostics.
struct AsdGradients {
    Matrix residual;  ///< D - P(XY)
    Matrix grad_x;    ///< -(D - P(XY)) Y^H
    Matrix grad_y;    ///< -X^H (D - P(XY))
};

inline AsdGradients asd_gradients(const Matrix& d, const SamplingPattern& omega, const Matrix& x, const Matrix& y) {
    AsdGradients g;
    g.residual = omega.project(Matrix(d - x * y));
    g.grad_x = -g.residual * y.adjoint();
    g.grad_y = -x.adjoint() * g.residual;
    return g;
}

inline double asd_objective(const Matrix& d, const SamplingPattern& omega, const Matrix& x, const Matrix& y) {
    return 0.5 * omega.project(Matrix(d - x * y)).squaredNorm();
}

namespace detail {

// Working state for ASD on coordinate-list observations. X is kept row-major
// and Y column-major so both factors of an entry (i,j) are contiguous.
class AsdKernel {
public:
    AsdKernel(const Observations& obs, const FactorPair& init)
        : obs_(obs), r_(init.rank()), x_(obs.n1 * r_), y_(obs.n * r_), res_(obs.size()), h_(obs.size()),
          gx_(obs.n1 * r_), gy_(obs.n * r_) {
        for (std::size_t i = 0; i < obs.n1; ++i)
            for (std::size_t l = 0; l < r_; ++l) x_[i * r_ + l] = init.X(Eigen::Index(i), Eigen::Index(l));
        for (std::size_t j = 0; j < obs.n; ++j)
            for (std::size_t l = 0; l < r_; ++l) y_[j * r_ + l] = init.Y(Eigen::Index(l), Eigen::Index(j));
        refresh();
    }

    void refresh() {
        for (std::size_t w = 0; w < obs_.size(); ++w) res_[w] = obs_.value[w] - entry(x_, obs_.row[w], y_, obs_.col[w]);
    }

    double residual_sq() const { return squared_norm(res_); }

    /// Maintained residual, one entry per observation.
    std::span<const cplx> residual() const { return res_; }

    /// Returns eta (0 when the step is skipped).
    double step_x() {
        std::fill(gx_.begin(), gx_.end(), cplx(0.0, 0.0));
        for (std::size_t w = 0; w < obs_.size(); ++w) {
            const cplx rw = res_[w];
            cplx* g = &gx_[obs_.row[w] * r_];
            const cplx* yc = &y_[obs_.col[w] * r_];
            for (std::size_t l = 0; l < r_; ++l) g[l] -= rw * std::conj(yc[l]);
        }
        const double gnorm = squared_norm(gx_);
        if (gnorm == 0.0) return 0.0;
        for (std::size_t w = 0; w < obs_.size(); ++w) h_[w] = entry(gx_, obs_.row[w], y_, obs_.col[w]);
        const double hnorm = squared_norm(h_);
        if (hnorm == 0.0) return 0.0;
        const double eta = gnorm / hnorm;
        for (std::size_t n = 0; n < x_.size(); ++n) x_[n] -= eta * gx_[n];
        for (std::size_t w = 0; w < obs_.size(); ++w) res_[w] += eta * h_[w];
        return eta;
    }

    double step_y() {
        std::fill(gy_.begin(), gy_.end(), cplx(0.0, 0.0));
        for (std::size_t w = 0; w < obs_.size(); ++w) {
            const cplx rw = res_[w];
            cplx* g = &gy_[obs_.col[w] * r_];
            const cplx* xr = &x_[obs_.row[w] * r_];
            for (std::size_t l = 0; l < r_; ++l) g[l] -= std::conj(xr[l]) * rw;
        }
        const double gnorm = squared_norm(gy_);
        if (gnorm == 0.0) return 0.0;
        for (std::size_t w = 0; w < obs_.size(); ++w) h_[w] = entry(x_, obs_.row[w], gy_, obs_.col[w]);
        const double hnorm = squared_norm(h_);
        if (hnorm == 0.0) return 0.0;
        const double eta = gnorm / hnorm;
        for (std::size_t n = 0; n < y_.size(); ++n) y_[n] -= eta * gy_[n];
        for (std::size_t w = 0; w < obs_.size(); ++w) res_[w] += eta * h_[w];
        return eta;
    }

    FactorPair factors() const {
        FactorPair f{Matrix(Eigen::Index(obs_.n1), Eigen::Index(r_)), Matrix(Eigen::Index(r_), Eigen::Index(obs_.n))};
        for (std::size_t i = 0; i < obs_.n1; ++i)
            for (std::size_t l = 0; l < r_; ++l) f.X(Eigen::Index(i), Eigen::Index(l)) = x_[i * r_ + l];
        for (std::size_t j = 0; j < obs_.n; ++j)
            for (std::size_t l = 0; l < r_; ++l) f.Y(Eigen::Index(l), Eigen::Index(j)) = y_[j * r_ + l];
        return f;
    }

private:
    cplx entry(const std::vector<cplx>& a, std::size_t i, const std::vector<cplx>& b, std::size_t j) const {
        const cplx* ar = &a[i * r_];
        const cplx* bc = &b[j * r_];
        cplx s(0.0, 0.0);
        for (std::size_t l = 0; l < r_; ++l) s += ar[l] * bc[l];
        return s;
    }

    const Observations& obs_;
    std::size_t r_;
    std::vector<cplx> x_, y_, res_, h_, gx_, gy_;
};

} // namespace detail

namespace detail {

// Shared descent loop. Kernel provides residual_sq(), step_x(), step_y() and
// refresh(); residual_sq() is ||R||_F^2 in the data's own metric.
template <typename Kernel>
void descend(Kernel& kernel, double dnorm, const AsdConfig& cfg, AsdResult& out) {
    const double scale = dnorm > 0.0 ? dnorm : 1.0;
    double rsq = kernel.residual_sq();
    double res = std::sqrt(rsq) / scale;
    std::vector<double> history{res};
    out.trace.push_back({0, res, 0.0, 0.0});
    if (cfg.record_objective) out.objective.push_back(0.5 * rsq);

    std::size_t it = 0;
    while (true) {
        if (res <= cfg.tol_residual) {
            out.reason = StopReason::residual_tolerance;
            break;
        }
        if (it >= AsdConfig::stall_window &&
            std::abs(history[it - AsdConfig::stall_window] - res) < cfg.tol_stall) {
            out.reason = StopReason::stalled;
            break;
        }
        if (it >= cfg.max_iters) {
            out.reason = StopReason::max_iterations;
            break;
        }
        const double eta_x = kernel.step_x();
        if (cfg.record_objective) out.objective.push_back(0.5 * kernel.residual_sq());
        const double eta_y = kernel.step_y();
        ++it;
        if (cfg.refresh_period > 0 && it % cfg.refresh_period == 0) kernel.refresh();
        rsq = kernel.residual_sq();
        if (cfg.record_objective) out.objective.push_back(0.5 * rsq);
        res = std::sqrt(rsq) / scale;
        history.push_back(res);
        out.trace.push_back({it, res, eta_x, eta_y});
        if (eta_x == 0.0 && eta_y == 0.0) {
            out.reason = res <= cfg.tol_residual ? StopReason::residual_tolerance : StopReason::stationary;
            break;
        }
    }
    out.iterations = it;
    out.relative_residual = res;
}

} // namespace detail

/// Alternating steepest descent with exact line search on the sampled entries.
inline AsdResult asd(const Observations& obs, const FactorPair& init, const AsdConfig& cfg = {}) {
    if (init.rows() != obs.n1 || init.cols() != obs.n || std::size_t(init.Y.rows()) != init.rank())
        throw dimension_error("asd: initial factors are not conformal with the data");
    AsdResult out;
    const double dnorm = obs.norm();
    if (init.rank() == 0) {
        out.factors = init;
        out.relative_residual = dnorm > 0.0 ? 1.0 : 0.0;
        out.reason = dnorm > 0.0 ? StopReason::stationary : StopReason::residual_tolerance;
        out.trace.push_back({0, out.relative_residual, 0.0, 0.0});
        return out;
    }
    detail::AsdKernel kernel(obs, init);
    detail::descend(kernel, dnorm, cfg, out);
    out.factors = kernel.factors();
    return out;
}

inline AsdResult asd(const Matrix& d, const SamplingPattern& omega, const FactorPair& init,
                     const AsdConfig& cfg = {}) {
    return asd(Observations::from(d, omega), init, cfg);
}

/// Gaussian vector rescaled to norm 2^-j sqrt(p) / ||D||_F (column j of a LoopedASD init).
inline Vector rescaled_gaussian(std::size_t n, std::size_t j, double p, double dnorm, CounterRng& rng, bool complex) {
    Vector g(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = complex ? rng.complex_normal() : cplx(rng.normal(), 0.0);
    const double gn = g.norm();
    if (gn == 0.0 || dnorm == 0.0) return Vector::Zero(Eigen::Index(n));
    return g * (std::ldexp(1.0, -int(j)) * std::sqrt(p) / (dnorm * gn));
}

/// Gaussian factors scaled so that ||X Y||_F = target_norm with ||X||_F = ||Y||_F.
inline FactorPair gaussian_factors(std::size_t n1, std::size_t n, std::size_t r, double target_norm, CounterRng& rng,
                                   bool complex) {
    FactorPair f{Matrix(Eigen::Index(n1), Eigen::Index(r)), Matrix(Eigen::Index(r), Eigen::Index(n))};
    auto fill = [&](Matrix& m) {
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                m(i, c) = complex ? rng.complex_normal() : cplx(rng.normal(), 0.0);
    };
    fill(f.X);
    fill(f.Y);
    const double pn = (f.X * f.Y).norm();
    if (pn > 0.0 && target_norm > 0.0) {
        const double s = std::sqrt(target_norm / pn);
        const double balance = std::sqrt(f.Y.norm() / f.X.norm());
        f.X *= s * balance;
        f.Y *= s / balance;
    }
    return f;
}

/// Thin SVD of X*Y computed through QR of both factors.
struct LowRankSvd {
    Matrix U;        ///< n1 x r
    RealVector s;    ///< r, nonincreasing
    Matrix V;        ///< N x r
};

inline LowRankSvd low_rank_svd(const Matrix& x, const Matrix& y) {
    const Eigen::Index r = x.cols();
    LowRankSvd out;
    if (r == 0) {
        out.U = Matrix(x.rows(), 0);
        out.V = Matrix(y.cols(), 0);
        out.s = RealVector(0);
        return out;
    }
    if (r > x.rows() || r > y.cols()) {
        Eigen::JacobiSVD<Matrix> svd(x * y, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::Index k = std::min<Eigen::Index>(r, svd.singularValues().size());
        out.U = svd.matrixU().leftCols(k);
        out.V = svd.matrixV().leftCols(k);
        out.s = svd.singularValues().head(k);
        return out;
    }
    Eigen::HouseholderQR<Matrix> qx(x);
    Eigen::HouseholderQR<Matrix> qy(y.adjoint());
    const Matrix qxm = qx.householderQ() * Matrix::Identity(x.rows(), r);
    const Matrix qym = qy.householderQ() * Matrix::Identity(y.cols(), r);
    const Matrix rx = qx.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    const Matrix ry = qy.matrixQR().topRows(r).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Matrix> core(rx * ry.adjoint(), Eigen::ComputeFullU | Eigen::ComputeFullV);
    out.U = qxm * core.matrixU();
    out.V = qym * core.matrixV();
    out.s = core.singularValues();
    return out;
}

// ---------------------------------------------------------------------------
// Knee detection
// ---------------------------------------------------------------------------

enum class KneeMethod { kneedle, gradient_threshold };

struct Knee {
    std::size_t index = 1;  ///< one-based position in the input sequence
    bool found = false;     ///< false when the curve has no interior knee
};

/// Point of maximal distance below the chord of the curve normalized to the unit square.
///
/// gradient_threshold instead returns the first j with |v[j+1] - v[j]| / v[1] < threshold.
inline Knee knee_detect(std::span<const double> v, KneeMethod method = KneeMethod::kneedle,
                        double threshold = 0.01) {
    const std::size_t n = v.size();
    if (n < 3) throw contract_error("knee_detect needs at least 3 values");
    if (method == KneeMethod::gradient_threshold) {
        const double base = std::abs(v[0]);
        if (base == 0.0) return {1, false};
        for (std::size_t j = 0; j + 1 < n; ++j)
            if (std::abs(v[j + 1] - v[j]) / base < threshold) return {j + 1, true};
        return {n, false};
    }
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double range = *hi - *lo;
    if (!(range > 0.0)) return {1, false};
    const double y0 = (v[0] - *lo) / range;
    const double y1 = (v[n - 1] - *lo) / range;
    double best = 0.0;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double x = double(j) / double(n - 1);
        const double y = (v[j] - *lo) / range;
        const double chord = y0 + (y1 - y0) * x;
        const double diff = chord - y;
        if (diff > best) {
            best = diff;
            arg = j;
        }
    }
    if (best <= 1e-12) return {n, false};
    return {arg + 1, true};
}

// ---------------------------------------------------------------------------
// LoopedASD
// ---------------------------------------------------------------------------

struct LoopedConfig {
    std::size_t r_max = 0;  ///< 0 selects min(n1, N, 60)
    std::size_t folds = 5;
    KneeMethod knee = KneeMethod::kneedle;
    double knee_threshold = 0.01;
    /// Rank fixed in advance: r_fix loop passes, then the final completion at r_fix.
    std::optional<std::size_t> fixed_rank;
    /// Draw every test fold uniformly (true) instead of cycling a permutation of the folds first.
    bool uniform_folds = false;
    /// Complex Gaussian columns even for real data. The rank loop then escapes the
    /// spurious real minima that trap ASD near its sampling threshold; for real data
    /// the final run restarts from the real part, so the output stays real.
    bool complex_init = true;
    AsdConfig inner;
    AsdConfig final;
    std::uint64_t seed = 0;
};

struct LoopedResult {
    FactorPair factors;
    std::size_t rank = 0;
    std::vector<double> test_errors;      ///< t_j for j = 1..r_max
    std::vector<double> relative_errors;  ///< t_j / ||P_test_j(D)||, with 1 prepended for rank 0
    bool knee_found = false;
    bool knee_suspicious = false;         ///< t at the knee exceeds 1.5 x the curve minimum
    AsdResult final_run;
    std::size_t inner_iterations = 0;
};

inline std::size_t default_r_max(std::size_t n1, std::size_t n) { return std::min({n1, n, std::size_t{60}}); }

/// Rank estimated from the relative test-error curve (index 0 is the zero completion).
inline std::size_t select_rank(std::span<const double> rel, KneeMethod method, double threshold, bool* found = nullptr,
                               bool* suspicious = nullptr) {
    const std::size_t n = rel.size();
    const double best = *std::min_element(rel.begin() + 1, rel.end());
    std::size_t rank = 0;
    bool ok = false;
    if (!(best < rel[0])) {
        rank = 0;  // no rank improves on predicting zero
    } else if (n < 3) {
        rank = std::size_t(std::min_element(rel.begin(), rel.end()) - rel.begin());
        ok = true;
    } else {
        const Knee k = knee_detect(rel, method, threshold);
        rank = k.index - 1;
        ok = k.found;
    }
    if (found) *found = ok;
    if (suspicious) *suspicious = rel[rank] > 1.5 * best;
    return rank;
}

/// LoopedASD: grow the rank one column at a time on a training split, measure the
/// held-out error t_j, pick the rank at the knee, then complete on all samples
/// starting from the SVD projection of the last factors.
inline LoopedResult looped_asd(const Observations& obs, const LoopedConfig& cfg) {
    const std::size_t n1 = obs.n1, n = obs.n;
    const std::size_t r_max = cfg.fixed_rank ? *cfg.fixed_rank : (cfg.r_max ? cfg.r_max : default_r_max(n1, n));
    if (r_max == 0 || r_max > std::min(n1, n)) throw contract_error("looped_asd: r_max must lie in [1, min(n1, N)]");
    if (cfg.folds < 2) throw contract_error("looped_asd: need at least 2 folds");

    LoopedResult out;
    out.factors = FactorPair::empty(n1, n);
    const double dnorm = obs.norm();
    if (dnorm == 0.0 || obs.size() < 2) {
        out.final_run.factors = out.factors;
        out.final_run.reason = StopReason::residual_tolerance;
        return out;
    }
    const double p = double(obs.size()) / (double(n1) * double(n));
    const bool real_data = obs.is_real();
    const bool complex = cfg.complex_init || !real_data;
    CounterRng rng(cfg.seed, 0x100);

    // Random partition of the samples into folds of equal size (+-1).
    std::vector<std::size_t> perm(obs.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t a = perm.size(); a > 1; --a) std::swap(perm[a - 1], perm[rng.below(a)]);
    const std::size_t k = std::min(cfg.folds, obs.size());
    std::vector<std::vector<std::size_t>> fold(k);
    for (std::size_t s = 0; s < perm.size(); ++s) fold[s % k].push_back(perm[s]);
    for (auto& f : fold) std::sort(f.begin(), f.end());

    std::vector<std::size_t> fold_order(k);
    std::iota(fold_order.begin(), fold_order.end(), std::size_t{0});
    for (std::size_t a = k; a > 1; --a) std::swap(fold_order[a - 1], fold_order[rng.below(a)]);

    std::vector<std::uint8_t> in_test(obs.size());
    std::vector<std::size_t> train, test;
    out.relative_errors.push_back(1.0);
    FactorPair current = FactorPair::empty(n1, n);
    for (std::size_t j = 1; j <= r_max; ++j) {
        const std::size_t f = (cfg.uniform_folds || j > k) ? std::size_t(rng.below(k)) : fold_order[j - 1];
        std::fill(in_test.begin(), in_test.end(), std::uint8_t{0});
        for (auto s : fold[f]) in_test[s] = 1;
        train.clear();
        test.clear();
        for (std::size_t s = 0; s < obs.size(); ++s) (in_test[s] ? test : train).push_back(s);

        const Vector x = rescaled_gaussian(n1, j, p, dnorm, rng, complex);
        const Vector y = rescaled_gaussian(n, j, p, dnorm, rng, complex);
        FactorPair init{Matrix(Eigen::Index(n1), Eigen::Index(j)), Matrix(Eigen::Index(j), Eigen::Index(n))};
        if (j > 1) {
            init.X.leftCols(Eigen::Index(j - 1)) = current.X;
            init.Y.topRows(Eigen::Index(j - 1)) = current.Y;
        }
        init.X.col(Eigen::Index(j - 1)) = x;
        init.Y.row(Eigen::Index(j - 1)) = y.adjoint();

        const Observations train_obs = obs.subset(train);
        AsdResult run = asd(train_obs, init, cfg.inner);
        out.inner_iterations += run.iterations;
        current = std::move(run.factors);

        double err = 0.0, ref = 0.0;
        for (auto s : test) {
            cplx z(0.0, 0.0);
            for (Eigen::Index l = 0; l < Eigen::Index(j); ++l) z += current.X(obs.row[s], l) * current.Y(l, obs.col[s]);
            err += std::norm(obs.value[s] - z);
            ref += std::norm(obs.value[s]);
        }
        out.test_errors.push_back(std::sqrt(err));
        const double rel = ref > 0.0 ? std::sqrt(err / ref) : (err > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        out.relative_errors.push_back(std::isfinite(rel) ? rel : std::numeric_limits<double>::max());
    }

    std::size_t rank = r_max;
    if (cfg.fixed_rank) {
        out.knee_found = true;
    } else {
        rank = select_rank(out.relative_errors, cfg.knee, cfg.knee_threshold, &out.knee_found, &out.knee_suspicious);
    }
    out.rank = rank;
    if (rank == 0) {
        out.final_run.factors = out.factors;
        out.final_run.reason = StopReason::stationary;
        out.final_run.relative_residual = 1.0;
        return out;
    }

    LowRankSvd svd;
    if (real_data && complex) {
        const Eigen::MatrixXd re = (current.X * current.Y).real();
        Eigen::BDCSVD<Eigen::MatrixXd> dense(re, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto keep = std::min<Eigen::Index>(Eigen::Index(rank), dense.singularValues().size());
        svd.U = dense.matrixU().leftCols(keep).cast<cplx>();
        svd.V = dense.matrixV().leftCols(keep).cast<cplx>();
        svd.s = dense.singularValues().head(keep);
    } else {
        svd = low_rank_svd(current.X, current.Y);
    }
    const auto r = Eigen::Index(std::min<std::size_t>(rank, std::size_t(svd.s.size())));
    FactorPair init{svd.U.leftCols(r), svd.s.head(r).cast<cplx>().asDiagonal() * svd.V.leftCols(r).adjoint()};
    out.final_run = asd(obs, init, cfg.final);
    out.factors = out.final_run.factors;
    out.rank = std::size_t(r);
    return out;
}

inline LoopedResult looped_asd(const Matrix& d, const SamplingPattern& omega, const LoopedConfig& cfg) {
    return looped_asd(Observations::from(d, omega), cfg);
}

} // namespace starcomplete
