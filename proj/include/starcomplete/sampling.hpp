#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "transform.hpp"

namespace starcomplete {

enum class PatternKind { bernoulli_matrix, bernoulli_tensor, raster, robust_raster, external };

inline std::string to_string(PatternKind k) {
    switch (k) {
    case PatternKind::bernoulli_matrix: return "bernoulli-matrix";
    case PatternKind::bernoulli_tensor: return "bernoulli-tensor";
    case PatternKind::raster: return "raster";
    case PatternKind::robust_raster: return "robust-raster";
    case PatternKind::external: return "external";
    }
    return "?";
}

/// Common n1 x n2 mask shared by every frontal slice of a tube-complete pattern.
struct SliceMask {
    std::size_t n1 = 0, n2 = 0;
    std::vector<std::uint8_t> mask;  // column-major

    bool operator()(std::size_t i, std::size_t j) const { return mask[i + n1 * j] != 0; }
    std::size_t count() const { return std::size_t(std::count(mask.begin(), mask.end(), std::uint8_t{1})); }

    Matrix project(const Matrix& m) const {
        if (std::size_t(m.rows()) != n1 || std::size_t(m.cols()) != n2) throw dimension_error("slice mask: dims mismatch");
        Matrix out = m;
        for (std::size_t n = 0; n < mask.size(); ++n)
            if (!mask[n]) out.data()[n] = cplx(0.0, 0.0);
        return out;
    }
};

/// The sampled index set Omega of an n1 x n2 x n3 tensor (n3 = 1 for matrices).
class SamplingPattern {
public:
    SamplingPattern() = default;

    SamplingPattern(std::size_t n1, std::size_t n2, std::size_t n3, std::vector<std::uint8_t> mask, PatternKind kind,
                    std::uint64_t seed)
        : n1_(n1), n2_(n2), n3_(n3), mask_(std::move(mask)), kind_(kind), seed_(seed) {
        if (mask_.size() != n1 * n2 * n3) throw dimension_error("mask length does not match extents");
        for (auto& b : mask_) b = b ? 1 : 0;
    }

    /// Full pattern (every entry observed).
    static SamplingPattern full(std::size_t n1, std::size_t n2, std::size_t n3) {
        return {n1, n2, n3, std::vector<std::uint8_t>(n1 * n2 * n3, 1), PatternKind::external, 0};
    }

    /// Nonzero entries of a tensor mark the pattern (used for masks loaded from disk).
    static SamplingPattern from_tensor(const Tensor3& t) {
        std::vector<std::uint8_t> mask(t.size());
        for (std::size_t n = 0; n < t.size(); ++n) mask[n] = t.data()[n] != cplx(0.0, 0.0) ? 1 : 0;
        return {t.n1(), t.n2(), t.n3(), std::move(mask), PatternKind::external, 0};
    }

    std::size_t n1() const { return n1_; }
    std::size_t n2() const { return n2_; }
    std::size_t n3() const { return n3_; }
    std::size_t total() const { return mask_.size(); }
    PatternKind kind() const { return kind_; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<std::uint8_t>& mask() const { return mask_; }

    bool operator()(std::size_t i, std::size_t j, std::size_t k) const { return mask_[i + n1_ * (j + n2_ * k)] != 0; }

    std::size_t count() const { return std::size_t(std::count(mask_.begin(), mask_.end(), std::uint8_t{1})); }
    double realized_ratio() const { return double(count()) / double(total()); }

    bool matches(const Tensor3& t) const { return t.n1() == n1_ && t.n2() == n2_ && t.n3() == n3_; }

    /// Linear (storage-order) indices of the sampled entries, ascending.
    std::vector<std::size_t> indices() const {
        std::vector<std::size_t> idx;
        idx.reserve(count());
        for (std::size_t n = 0; n < mask_.size(); ++n)
            if (mask_[n]) idx.push_back(n);
        return idx;
    }

    /// Every tube (i,j,:) is either fully sampled or not at all.
    bool tube_complete() const {
        const std::size_t s = n1_ * n2_;
        for (std::size_t k = 1; k < n3_; ++k)
            for (std::size_t n = 0; n < s; ++n)
                if (mask_[n + k * s] != mask_[n]) return false;
        return true;
    }

    /// P_Omega: zero every entry outside the pattern.
    Tensor3 project(const Tensor3& t) const {
        if (!matches(t)) throw dimension_error("project: tensor " + t.shape_string() + " does not match pattern");
        Tensor3 out = t;
        auto d = out.data();
        for (std::size_t n = 0; n < mask_.size(); ++n)
            if (!mask_[n]) d[n] = cplx(0.0, 0.0);
        return out;
    }

    Matrix project(const Matrix& m) const {
        if (n3_ != 1 || std::size_t(m.rows()) != n1_ || std::size_t(m.cols()) != n2_)
            throw dimension_error("project: matrix does not match pattern");
        Matrix out = m;
        for (std::size_t n = 0; n < mask_.size(); ++n)
            if (!mask_[n]) out.data()[n] = cplx(0.0, 0.0);
        return out;
    }

    /// Indicator tensor 1_Omega with real 0/1 entries.
    Tensor3 indicator() const {
        Tensor3 t(n1_, n2_, n3_);
        for (std::size_t n = 0; n < mask_.size(); ++n) t.data()[n] = mask_[n] ? 1.0 : 0.0;
        return t;
    }

    /// Pattern of the flattened n1 x (n2*n3) matrix (same storage image).
    SamplingPattern flattened() const { return {n1_, n2_ * n3_, 1, mask_, kind_, seed_}; }

private:
    std::size_t n1_ = 0, n2_ = 0, n3_ = 0;
    std::vector<std::uint8_t> mask_;
    PatternKind kind_ = PatternKind::external;
    std::uint64_t seed_ = 0;
};

namespace detail {
inline void check_ratio(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw contract_error("sampling ratio p must lie in [0, 1]");
}
} // namespace detail

/// Each entry independently with probability p. n3 = 1 gives a matrix pattern.
inline SamplingPattern bernoulli(std::size_t n1, std::size_t n2, std::size_t n3, double p, std::uint64_t seed) {
    detail::check_ratio(p);
    CounterRng rng(seed, 1);
    std::vector<std::uint8_t> mask(n1 * n2 * n3);
    for (auto& b : mask) b = rng.bernoulli(p) ? 1 : 0;
    return {n1, n2, n3, std::move(mask), n3 == 1 ? PatternKind::bernoulli_matrix : PatternKind::bernoulli_tensor, seed};
}

/// Raster scan: each tube (i,j,:) is sampled whole, independently with probability p.
///
/// Tubes run along mode 3, the scan direction; data must be oriented so.
inline SamplingPattern raster(std::size_t n1, std::size_t n2, std::size_t n3, double p, std::uint64_t seed) {
    detail::check_ratio(p);
    CounterRng rng(seed, 2);
    const std::size_t s = n1 * n2;
    std::vector<std::uint8_t> mask(s * n3);
    for (std::size_t n = 0; n < s; ++n) {
        const std::uint8_t b = rng.bernoulli(p) ? 1 : 0;
        for (std::size_t k = 0; k < n3; ++k) mask[n + k * s] = b;
    }
    return {n1, n2, n3, std::move(mask), PatternKind::raster, seed};
}

/// Raster scan in which no row index i repeats until every row has been used.
///
/// ceil(p*n1*n2) tubes are drawn in rounds; each round visits the rows in a fresh
/// random order, and each visit of row i takes the next column from a per-row
/// random permutation of [n2], so no tube is drawn twice.
inline SamplingPattern robust_raster(std::size_t n1, std::size_t n2, std::size_t n3, double p, std::uint64_t seed) {
    detail::check_ratio(p);
    CounterRng rng(seed, 3);
    const std::size_t s = n1 * n2;
    const auto budget = std::min<std::size_t>(s, std::size_t(std::ceil(p * double(s) - 1e-9)));

    std::vector<std::vector<std::size_t>> column_order(n1, std::vector<std::size_t>(n2));
    for (auto& order : column_order) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t a = n2; a > 1; --a) std::swap(order[a - 1], order[rng.below(a)]);
    }
    std::vector<std::size_t> used(n1, 0);
    std::vector<std::size_t> rows(n1);
    std::vector<std::uint8_t> tube(s, 0);
    std::size_t drawn = 0;
    while (drawn < budget) {
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        for (std::size_t a = n1; a > 1; --a) std::swap(rows[a - 1], rows[rng.below(a)]);
        for (std::size_t q = 0; q < n1 && drawn < budget; ++q) {
            const std::size_t i = rows[q];
            const std::size_t j = column_order[i][used[i]++];
            tube[i + n1 * j] = 1;
            ++drawn;
        }
    }
    std::vector<std::uint8_t> mask(s * n3);
    for (std::size_t k = 0; k < n3; ++k) std::copy(tube.begin(), tube.end(), mask.begin() + std::ptrdiff_t(k * s));
    return {n1, n2, n3, std::move(mask), PatternKind::robust_raster, seed};
}

inline PatternKind parse_pattern_kind(const std::string& name) {
    if (name == "bernoulli") return PatternKind::bernoulli_tensor;
    if (name == "raster") return PatternKind::raster;
    if (name == "robust-raster") return PatternKind::robust_raster;
    throw contract_error("unknown pattern '" + name + "'");
}

inline SamplingPattern make_pattern(PatternKind kind, std::size_t n1, std::size_t n2, std::size_t n3, double p,
                                    std::uint64_t seed) {
    switch (kind) {
    case PatternKind::bernoulli_matrix:
    case PatternKind::bernoulli_tensor: return bernoulli(n1, n2, n3, p, seed);
    case PatternKind::raster: return raster(n1, n2, n3, p, seed);
    case PatternKind::robust_raster: return robust_raster(n1, n2, n3, p, seed);
    case PatternKind::external: break;
    }
    throw contract_error("cannot generate an external pattern");
}

/// Per-slice mask of a tube-complete pattern.
inline SliceMask slice_mask(const SamplingPattern& pattern) {
    if (!pattern.tube_complete()) throw contract_error("slice_mask: pattern is not tube-complete");
    SliceMask m{pattern.n1(), pattern.n2(), {}};
    m.mask.assign(pattern.mask().begin(), pattern.mask().begin() + std::ptrdiff_t(pattern.n1() * pattern.n2()));
    return m;
}

/// Applies P_Omegabar to every frontal slice.
inline Tensor3 project_slices(const SliceMask& m, const Tensor3& t) {
    if (t.n1() != m.n1 || t.n2() != m.n2) throw dimension_error("project_slices: dims mismatch");
    Tensor3 out = t;
    for (std::size_t k = 0; k < t.n3(); ++k) {
        auto f = out.frontal(k);
        for (std::size_t n = 0; n < m.mask.size(); ++n)
            if (!m.mask[n]) f.data()[n] = cplx(0.0, 0.0);
    }
    return out;
}

} // namespace starcomplete
