#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include <Eigen/SVD>

#include "errors.hpp"
#include "tensor.hpp"
#include "transform.hpp"

namespace starcomplete {

/// Slicewise product of two transform-domain tensors: C_k = A_k * B_k.
inline Tensor3 slicewise_product(const Tensor3& a, const Tensor3& b) {
    if (a.n2() != b.n1() || a.n3() != b.n3())
        throw dimension_error("slicewise product: " + a.shape_string() + " * " + b.shape_string());
    Tensor3 c(a.n1(), b.n2(), a.n3());
    for (std::size_t k = 0; k < a.n3(); ++k) c.frontal(k).noalias() = a.frontal(k) * b.frontal(k);
    return c;
}

/// Slicewise conjugate transpose of a transform-domain tensor.
inline Tensor3 slicewise_adjoint(const Tensor3& a) {
    Tensor3 h(a.n2(), a.n1(), a.n3());
    for (std::size_t k = 0; k < a.n3(); ++k) h.frontal(k) = a.frontal(k).adjoint();
    return h;
}

/// A *_M B: transform once, multiply frontal slices, transform back once.
inline Tensor3 mprod(const Tensor3& a, const Tensor3& b, const Transform& m) {
    if (a.n2() != b.n1() || a.n3() != b.n3() || a.n3() != m.n3())
        throw dimension_error("mprod: " + a.shape_string() + " * " + b.shape_string());
    Tensor3 c = slicewise_product(m.apply(a), m.apply(b));
    m.apply_inverse_inplace(c);
    return c;
}

inline Tensor3 conj_transpose(const Tensor3& a, const Transform& m) {
    Tensor3 h = slicewise_adjoint(m.apply(a));
    m.apply_inverse_inplace(h);
    return h;
}

inline Tensor3 identity_tensor(std::size_t n, std::size_t n3, const Transform& m) {
    Tensor3 hat(n, n, n3);
    for (std::size_t k = 0; k < n3; ++k) hat.frontal(k).setIdentity();
    m.apply_inverse_inplace(hat);
    return hat;
}

/// Sum of the traces of the transform-domain frontal slices.
inline cplx ttrace(const Tensor3& a, const Transform& m) {
    if (a.n1() != a.n2()) throw dimension_error("ttrace requires square frontal slices");
    const Tensor3 hat = m.apply(a);
    cplx s(0.0, 0.0);
    for (std::size_t k = 0; k < hat.n3(); ++k) s += hat.frontal(k).trace();
    return s;
}

/// Tensor inner product scaled by 1/|c|^2, so <A,A> = ||A||_F^2 for any M = cW.
inline cplx tip(const Tensor3& a, const Tensor3& b, const Transform& m) {
    if (!a.same_shape(b)) throw dimension_error("tip: shape mismatch");
    const Tensor3 ah = m.apply(a);
    const Tensor3 bh = m.apply(b);
    // tTr(A *_M B^H) = sum_k tr(A_k B_k^H) = sum_ijk Ahat_ijk conj(Bhat_ijk)
    cplx s(0.0, 0.0);
    const auto x = ah.data();
    const auto y = bh.data();
    for (std::size_t n = 0; n < x.size(); ++n) s += x[n] * std::conj(y[n]);
    return s / m.scale_squared();
}

/// Full t-SVDM: A = U *_M S *_M V^H, with transform-domain singular values kept
/// alongside (values[k] is nonincreasing and nonnegative).
struct TSVDM {
    Tensor3 U;
    Tensor3 S;
    Tensor3 V;
    std::vector<RealVector> values;
};

inline TSVDM tsvdm(const Tensor3& a, const Transform& m) {
    const Tensor3 hat = m.apply(a);
    const std::size_t n1 = a.n1(), n2 = a.n2(), n3 = a.n3();
    TSVDM out{Tensor3(n1, n1, n3), Tensor3(n1, n2, n3), Tensor3(n2, n2, n3), {}};
    out.values.reserve(n3);
    for (std::size_t k = 0; k < n3; ++k) {
        Eigen::JacobiSVD<Matrix> svd(hat.frontal(k), Eigen::ComputeFullU | Eigen::ComputeFullV);
        out.U.frontal(k) = svd.matrixU();
        out.V.frontal(k) = svd.matrixV();
        const RealVector& s = svd.singularValues();
        auto sk = out.S.frontal(k);
        for (Eigen::Index i = 0; i < s.size(); ++i) sk(i, i) = s(i);
        out.values.push_back(s);
    }
    m.apply_inverse_inplace(out.U);
    m.apply_inverse_inplace(out.S);
    m.apply_inverse_inplace(out.V);
    return out;
}

/// Transform-domain singular values of every frontal slice.
inline std::vector<RealVector> slice_singular_values(const Tensor3& a, const Transform& m) {
    const Tensor3 hat = m.apply(a);
    std::vector<RealVector> out;
    out.reserve(a.n3());
    for (std::size_t k = 0; k < a.n3(); ++k) {
        Eigen::JacobiSVD<Matrix> svd(hat.frontal(k));
        out.push_back(svd.singularValues());
    }
    return out;
}

struct RankProfile {
    std::size_t t_rank = 0;
    std::vector<std::size_t> multirank;
    std::size_t implicit_rank = 0;
};

inline RankProfile rank_profile(std::vector<std::size_t> multirank) {
    RankProfile r;
    r.t_rank = multirank.empty() ? 0 : *std::max_element(multirank.begin(), multirank.end());
    r.implicit_rank = std::accumulate(multirank.begin(), multirank.end(), std::size_t{0});
    r.multirank = std::move(multirank);
    return r;
}

inline constexpr double kDefaultRankTol = 1e-10;

/// Numerical ranks from per-slice singular values; cutoff is tol * largest value over all slices.
inline RankProfile ranks_from_values(const std::vector<RealVector>& values, double tol = kDefaultRankTol) {
    if (tol < 0.0) throw contract_error("rank tolerance must be nonnegative");
    double smax = 0.0;
    for (const auto& v : values)
        if (v.size() > 0) smax = std::max(smax, v.maxCoeff());
    std::vector<std::size_t> rho(values.size(), 0);
    if (smax > 0.0) {
        const double cut = tol * smax;
        for (std::size_t k = 0; k < values.size(); ++k)
            rho[k] = std::size_t((values[k].array() > cut).count());
    }
    return rank_profile(std::move(rho));
}

inline RankProfile ranks(const Tensor3& a, const Transform& m, double tol = kDefaultRankTol) {
    return ranks_from_values(slice_singular_values(a, m), tol);
}

/// Result of thresholding singular values by cumulative energy across all slices.
struct EnergyTruncation {
    std::vector<RealVector> values;  ///< thresholded copy of the input
    RankProfile ranks;               ///< rho*_k = nonzero values kept in slice k
    std::size_t kept = 0;            ///< J, the number of leading sorted values retained
    double threshold = 0.0;          ///< w_J
};

/// Sorts all values into w (descending), finds the first J with
/// sum_{j<=J} w_j^2 > gamma * sum_j w_j^2 and zeroes every value below w_J.
/// w_J itself survives. When no prefix exceeds the bound (gamma = 1) J is the
/// total count, so only values that are already zero vanish.
inline EnergyTruncation truncate_energy(const std::vector<RealVector>& values, double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw contract_error("gamma must lie in (0, 1]");
    std::vector<double> w;
    for (const auto& v : values)
        for (Eigen::Index i = 0; i < v.size(); ++i) w.push_back(v(i));
    if (w.empty()) throw contract_error("truncate_energy: empty singular value set");
    std::sort(w.begin(), w.end(), std::greater<>());

    std::vector<double> cumulative(w.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        acc += w[j] * w[j];
        cumulative[j] = acc;
    }
    const double total = cumulative.back();
    std::size_t J = w.size();
    for (std::size_t j = 0; j < w.size(); ++j) {
        if (cumulative[j] > gamma * total) {
            J = j + 1;
            break;
        }
    }
    const double wJ = w[J - 1];

    EnergyTruncation out;
    out.kept = J;
    out.threshold = wJ;
    std::vector<std::size_t> rho(values.size(), 0);
    for (std::size_t k = 0; k < values.size(); ++k) {
        RealVector v = values[k];
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (v(i) < wJ) v(i) = 0.0;
            if (v(i) > 0.0) ++rho[k];
        }
        out.values.push_back(std::move(v));
    }
    out.ranks = rank_profile(std::move(rho));
    return out;
}

/// Rebuilds A keeping the leading keep[k] singular triplets of each transform-domain slice.
inline Tensor3 truncated_reconstruction(const Tensor3& a, const Transform& m, const std::vector<std::size_t>& keep) {
    if (keep.size() != a.n3()) throw dimension_error("keep counts must match n3");
    Tensor3 hat = m.apply(a);
    for (std::size_t k = 0; k < a.n3(); ++k) {
        Eigen::JacobiSVD<Matrix> svd(hat.frontal(k), Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto r = Eigen::Index(std::min<std::size_t>(keep[k], std::size_t(svd.singularValues().size())));
        hat.frontal(k) = svd.matrixU().leftCols(r) * svd.singularValues().head(r).cast<cplx>().asDiagonal() *
                         svd.matrixV().leftCols(r).adjoint();
    }
    m.apply_inverse_inplace(hat);
    return hat;
}

/// Keep counts for a t-rank-t truncation (the leading t singular tubes).
inline std::vector<std::size_t> tube_truncation_counts(std::size_t t, std::size_t n3) {
    return std::vector<std::size_t>(n3, t);
}

/// Keep counts for the r globally largest singular values across slices.
inline std::vector<std::size_t> global_truncation_counts(const std::vector<RealVector>& values, std::size_t r) {
    struct Entry {
        double value;
        std::size_t slice;
    };
    std::vector<Entry> all;
    for (std::size_t k = 0; k < values.size(); ++k)
        for (Eigen::Index i = 0; i < values[k].size(); ++i) all.push_back({values[k](i), k});
    std::stable_sort(all.begin(), all.end(), [](const Entry& x, const Entry& y) { return x.value > y.value; });
    std::vector<std::size_t> keep(values.size(), 0);
    for (std::size_t n = 0; n < std::min(r, all.size()); ++n) ++keep[all[n].slice];
    return keep;
}

} // namespace starcomplete
