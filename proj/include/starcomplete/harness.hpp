#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "asd.hpp"
#include "errors.hpp"
#include "mstar.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "sampling.hpp"
#include "tasd.hpp"
#include "tensor.hpp"
#include "transform.hpp"

namespace starcomplete {

/// RSE floor written to CSV in place of -inf.
inline constexpr double kRseFloorDb = -320.0;

/// 20 log10(||truth - estimate|| / ||truth||); -inf for an exact match.
inline double rse_db(const Tensor3& truth, const Tensor3& estimate) {
    if (!truth.same_shape(estimate)) throw dimension_error("rse: shape mismatch");
    const double tn = squared_norm(truth.data());
    if (tn == 0.0) throw contract_error("rse: truth tensor is zero");
    const double en = squared_norm((truth - estimate).data());
    if (en == 0.0) return -std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(en / tn);
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Spectromicroscopy-like phantom: n1 energies x n2 rows x n3 columns, each
/// voxel a nonnegative mixture of n_materials smooth spectra.
struct Phantom {
    std::size_t n1 = 152, n2 = 40, n3 = 40;
    std::size_t n_materials = 3;
    double noise_sigma = 0.0;  ///< ||noise||_F = noise_sigma * ||clean||_F
    std::uint64_t seed = 0;
};

struct PhantomData {
    Tensor3 clean;
    Tensor3 noisy;  ///< clean + noise (equal to clean when noise_sigma = 0)
    std::vector<RealVector> spectra;
};

/// Absorption-edge spectrum: an erf step, a Gaussian white line above the edge
/// and a weak pre-edge slope, sampled on [0, 1].
inline RealVector phantom_spectrum(std::size_t n, CounterRng& rng) {
    const double edge = 0.3 + 0.3 * rng.uniform();
    const double width = 0.01 + 0.03 * rng.uniform();
    const double step = 0.5 + rng.uniform();
    const double peak = 0.3 + 1.2 * rng.uniform();
    const double offset = 0.01 + 0.04 * rng.uniform();
    const double peak_width = 0.02 + 0.04 * rng.uniform();
    const double slope = 0.2 * rng.uniform();
    RealVector s(static_cast<Eigen::Index>(n));
    for (std::size_t e = 0; e < n; ++e) {
        const double x = n > 1 ? double(e) / double(n - 1) : 0.0;
        const double g = (x - edge - offset) / peak_width;
        s(Eigen::Index(e)) = 0.05 + slope * x + step * 0.5 * (1.0 + std::erf((x - edge) / width)) +
                             peak * std::exp(-g * g);
    }
    return s;
}

/// Nonnegative abundance map made of a few Gaussian blobs.
inline Matrix phantom_abundance(std::size_t n2, std::size_t n3, CounterRng& rng) {
    Matrix a = Matrix::Zero(Eigen::Index(n2), Eigen::Index(n3));
    const std::size_t blobs = 2 + std::size_t(rng.below(3));
    for (std::size_t b = 0; b < blobs; ++b) {
        const double cx = rng.uniform(), cy = rng.uniform();
        const double radius = 0.1 + 0.25 * rng.uniform();
        const double height = 0.5 + rng.uniform();
        for (std::size_t x = 0; x < n2; ++x)
            for (std::size_t y = 0; y < n3; ++y) {
                const double u = (n2 > 1 ? double(x) / double(n2 - 1) : 0.5) - cx;
                const double v = (n3 > 1 ? double(y) / double(n3 - 1) : 0.5) - cy;
                a(Eigen::Index(x), Eigen::Index(y)) += height * std::exp(-(u * u + v * v) / (radius * radius));
            }
    }
    return a;
}

inline PhantomData make_phantom_data(const Phantom& spec) {
    if (spec.n1 == 0 || spec.n2 == 0 || spec.n3 == 0) throw dimension_error("phantom extents must be positive");
    if (spec.n_materials == 0) throw contract_error("phantom needs at least one material");
    if (!(spec.noise_sigma >= 0.0)) throw contract_error("noise sigma must be nonnegative");
    CounterRng rng(spec.seed, 0x50);
    PhantomData out{Tensor3(spec.n1, spec.n2, spec.n3), Tensor3(), {}};
    for (std::size_t m = 0; m < spec.n_materials; ++m) {
        const RealVector s = phantom_spectrum(spec.n1, rng);
        const Matrix a = phantom_abundance(spec.n2, spec.n3, rng);
        for (std::size_t y = 0; y < spec.n3; ++y)
            for (std::size_t x = 0; x < spec.n2; ++x) {
                const double w = a(Eigen::Index(x), Eigen::Index(y)).real();
                for (std::size_t e = 0; e < spec.n1; ++e) out.clean(e, x, y) += s(Eigen::Index(e)) * w;
            }
        out.spectra.push_back(s);
    }
    out.noisy = out.clean;
    if (spec.noise_sigma > 0.0) {
        CounterRng nrng(spec.seed, 0x51);
        Tensor3 noise(spec.n1, spec.n2, spec.n3);
        for (auto& z : noise.data()) z = nrng.normal();
        noise *= cplx(spec.noise_sigma * frobenius_norm(out.clean) / frobenius_norm(noise));
        out.noisy += noise;
    }
    return out;
}

inline Tensor3 make_phantom(const Phantom& spec) { return make_phantom_data(spec).noisy; }

/// Real tensor X *_M Y with Gaussian X (n1 x t x n3) and Y (t x n2 x n3).
inline Tensor3 synthetic_trank(std::size_t n1, std::size_t n2, std::size_t n3, std::size_t t, const Transform& m,
                               std::uint64_t seed) {
    CounterRng rng(seed, 0x60);
    Tensor3 x(n1, t, n3), y(t, n2, n3);
    for (auto& z : x.data()) z = rng.normal();
    for (auto& z : y.data()) z = rng.normal();
    return mprod(x, y, m);
}

/// Tensor whose transform-domain slice k has rank ranks[k] (Gaussian factors).
///
/// Under the DFT the ranks must satisfy ranks[k] == ranks[n3-k]; slices are
/// built in conjugate pairs so the result is real. Other transforms use real slices.
inline Tensor3 synthetic_multirank(std::size_t n1, std::size_t n2, const std::vector<std::size_t>& ranks,
                                   const Transform& m, std::uint64_t seed) {
    const std::size_t n3 = ranks.size();
    if (m.n3() != n3) throw dimension_error("synthetic_multirank: transform size does not match");
    for (auto r : ranks)
        if (r > std::min(n1, n2)) throw contract_error("synthetic_multirank: rank exceeds slice size");
    const bool dft = m.is_dft();
    if (dft)
        for (std::size_t k = 1; k < n3; ++k)
            if (ranks[k] != ranks[n3 - k]) throw contract_error("synthetic_multirank: DFT ranks must be conjugate-symmetric");
    CounterRng rng(seed, 0x61);
    Tensor3 hat(n1, n2, n3);
    for (std::size_t k = 0; k < n3; ++k) {
        if (dft && 2 * k > n3) {
            hat.frontal(k) = hat.frontal(n3 - k).conjugate();
            continue;
        }
        const bool real_slice = !dft || k == 0 || 2 * k == n3;
        const auto r = Eigen::Index(ranks[k]);
        Matrix a(static_cast<Eigen::Index>(n1), r), b(r, Eigen::Index(n2));
        for (Eigen::Index c = 0; c < r; ++c)
            for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, c) = real_slice ? cplx(rng.normal()) : rng.complex_normal();
        for (Eigen::Index j = 0; j < b.cols(); ++j)
            for (Eigen::Index c = 0; c < r; ++c) b(c, j) = real_slice ? cplx(rng.normal()) : rng.complex_normal();
        hat.frontal(k) = r > 0 ? Matrix(a * b) : Matrix::Zero(Eigen::Index(n1), Eigen::Index(n2));
    }
    m.apply_inverse_inplace(hat);
    if (dft)
        for (auto& z : hat.data()) z = cplx(z.real(), 0.0);
    return hat;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

enum class Algorithm { asd, tasd, tasdii };

inline std::string to_string(Algorithm a) {
    switch (a) {
    case Algorithm::asd: return "asd";
    case Algorithm::tasd: return "tasd";
    case Algorithm::tasdii: return "tasdii";
    }
    return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "asd") return Algorithm::asd;
    if (s == "tasd") return Algorithm::tasd;
    if (s == "tasdii") return Algorithm::tasdii;
    throw contract_error("unknown algorithm '" + s + "'");
}

/// Name of the swept parameter: r for ASD on the flattened matrix, t for TASD, gamma for TASDII.
inline std::string param_name(Algorithm a) {
    switch (a) {
    case Algorithm::asd: return "r";
    case Algorithm::tasd: return "t";
    case Algorithm::tasdii: return "gamma";
    }
    return "?";
}

/// Settings shared by every cell of a sweep. Cells differ only in (param, p, seeds).
struct CellSettings {
    Algorithm algo = Algorithm::tasdii;
    PatternKind pattern = PatternKind::robust_raster;
    std::string transform = "dft";
    AsdConfig asd;            ///< ASD and TASD stopping rules
    TasdiiConfig tasdii;      ///< gamma and looped.seed are overwritten per cell
};

struct SweepRow {
    std::string algo;
    std::string param_name;
    double param_value = 0.0;
    double p = 0.0;
    std::uint64_t seed_mask = 0;
    std::uint64_t seed_init = 0;
    double rse_db = 0.0;  ///< kRseFloorDb when exact, NaN when the cell failed
    bool exact = false;
    std::size_t iters = 0;
    double wall_ms = 0.0;
};

struct SweepSpec {
    CellSettings settings;
    std::vector<double> params;
    std::vector<double> ps;
    std::size_t n_seeds = 1;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct SweepCell {
    double param = 0.0, p = 0.0;
    double mean = 0.0, min = 0.0, std = 0.0;
    std::size_t n_ok = 0, n_failed = 0;
};

struct SweepResult {
    std::string algo;
    std::string param_name;
    std::vector<double> params;
    std::vector<double> ps;
    std::size_t n_seeds = 0;
    std::vector<SweepRow> rows;   ///< ordered by (p, seed, param)
    std::vector<SweepCell> cells; ///< ordered by (p, param)
};

inline std::uint64_t sweep_mask_seed(std::uint64_t seed, std::size_t p_index, std::size_t s) {
    return derive_seed(seed, 0x3A5C + p_index, s);
}
inline std::uint64_t sweep_init_seed(std::uint64_t seed, std::size_t p_index, std::size_t s) {
    return derive_seed(seed, 0x1417 + p_index, s);
}

namespace detail {

inline void finish_row(SweepRow& row, const Tensor3& truth, const Tensor3& estimate) {
    const double r = rse_db(truth, estimate);
    row.exact = std::isinf(r) && r < 0.0;
    row.rse_db = row.exact ? kRseFloorDb : r;
}

inline std::size_t param_as_count(double v) {
    if (!(v >= 1.0) || v != std::floor(v)) throw contract_error("rank parameter must be a positive integer");
    return std::size_t(v);
}

// Runs every parameter value for one (p, seed) pair on a common mask and init seed.
inline std::vector<SweepRow> run_group(const Tensor3& truth, const Tensor3& data, const CellSettings& cs,
                                       const std::vector<double>& params, double p, std::uint64_t seed_mask,
                                       std::uint64_t seed_init) {
    using clock = std::chrono::steady_clock;
    const std::size_t n1 = data.n1(), n2 = data.n2(), n3 = data.n3();
    const SamplingPattern omega = make_pattern(cs.pattern, n1, n2, n3, p, seed_mask);
    const Tensor3 observed = omega.project(data);
    const double target = omega.count() > 0 ? frobenius_norm(observed) / std::sqrt(omega.realized_ratio()) : 0.0;
    const bool complex = !data.is_real();
    const Transform m = Transform::from_name(cs.transform, n3);

    std::vector<SweepRow> rows;
    auto base_row = [&](double param) {
        SweepRow row;
        row.algo = to_string(cs.algo);
        row.param_name = param_name(cs.algo);
        row.param_value = param;
        row.p = p;
        row.seed_mask = seed_mask;
        row.seed_init = seed_init;
        return row;
    };

    std::optional<TasdiiStage1> stage1;
    double stage1_ms = 0.0;
    for (std::size_t q = 0; q < params.size(); ++q) {
        const double param = params[q];
        SweepRow row = base_row(param);
        const auto t0 = clock::now();
        try {
            switch (cs.algo) {
            case Algorithm::asd: {
                const std::size_t r = param_as_count(param);
                CounterRng rng(seed_init, 0x70);
                const SamplingPattern flat = omega.flattened();
                const Matrix d = flatten(observed);
                const FactorPair init = gaussian_factors(n1, n2 * n3, r, target, rng, complex);
                const AsdResult run = asd(d, flat, init, cs.asd);
                row.iters = run.iterations;
                finish_row(row, truth, unflatten(run.factors.product(), n1, n2, n3));
                break;
            }
            case Algorithm::tasd: {
                const std::size_t t = param_as_count(param);
                CounterRng rng(seed_init, 0x71);
                const TensorFactorPair init = random_tensor_factors(n1, n2, n3, t, target, m, rng, complex);
                const TasdResult run = tasd(observed, omega, init, m, cs.asd);
                row.iters = run.iterations;
                finish_row(row, truth, run.factors.product(m));
                break;
            }
            case Algorithm::tasdii: {
                TasdiiConfig cfg = cs.tasdii;
                cfg.gamma = param;
                cfg.looped.seed = seed_init;
                if (!stage1) {
                    stage1 = tasdii_stage1(observed, omega, m, cfg);
                    stage1_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
                }
                const TasdiiResult res = tasdii_finish(*stage1, cfg);
                for (const auto& rec : res.records) row.iters += rec.iterations;
                finish_row(row, truth, res.Z);
                break;
            }
            }
        } catch (const std::exception&) {
            row.rse_db = std::numeric_limits<double>::quiet_NaN();
            row.exact = false;
        }
        row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        // The shared stage is charged to every gamma, as if each ran alone.
        if (cs.algo == Algorithm::tasdii && q > 0) row.wall_ms += stage1_ms;
        rows.push_back(row);
    }
    return rows;
}

} // namespace detail

/// Re-runs a single sweep row from its seed ledger.
inline SweepRow rerun_cell(const Tensor3& truth, const Tensor3& data, const CellSettings& cs, const SweepRow& row) {
    return detail::run_group(truth, data, cs, {row.param_value}, row.p, row.seed_mask, row.seed_init).front();
}

inline std::vector<SweepCell> aggregate(const std::vector<SweepRow>& rows, const std::vector<double>& params,
                                        const std::vector<double>& ps) {
    std::vector<SweepCell> cells;
    for (double p : ps)
        for (double param : params) {
            SweepCell c;
            c.p = p;
            c.param = param;
            double sum = 0.0, sumsq = 0.0;
            c.min = std::numeric_limits<double>::infinity();
            for (const auto& r : rows) {
                if (r.p != p || r.param_value != param) continue;
                if (!std::isfinite(r.rse_db)) {
                    ++c.n_failed;
                    continue;
                }
                ++c.n_ok;
                sum += r.rse_db;
                sumsq += r.rse_db * r.rse_db;
                c.min = std::min(c.min, r.rse_db);
            }
            if (c.n_ok > 0) {
                c.mean = sum / double(c.n_ok);
                c.std = std::sqrt(std::max(0.0, sumsq / double(c.n_ok) - c.mean * c.mean));
            } else {
                c.mean = c.min = c.std = std::numeric_limits<double>::quiet_NaN();
            }
            cells.push_back(c);
        }
    return cells;
}

/// Runs n_seeds completions per (param, p) cell. Every parameter value of a
/// (p, seed) pair shares one mask and one init seed, so parameters are compared
/// on identical samples. Groups run on `threads` workers; rows are assembled in
/// grid order afterwards, so the output does not depend on the thread count.
inline SweepResult sweep(const Tensor3& truth, const Tensor3& data, const SweepSpec& spec) {
    if (spec.params.empty() || spec.ps.empty()) throw contract_error("sweep: grids must be nonempty");
    if (spec.n_seeds == 0) throw contract_error("sweep: need at least one seed");
    if (!truth.same_shape(data)) throw dimension_error("sweep: truth and data shapes differ");

    const std::size_t groups = spec.ps.size() * spec.n_seeds;
    std::vector<std::vector<SweepRow>> out(groups);
    parallel_for(groups, spec.threads, [&](std::size_t g) {
        const std::size_t pi = g / spec.n_seeds, s = g % spec.n_seeds;
        out[g] = detail::run_group(truth, data, spec.settings, spec.params, spec.ps[pi],
                                   sweep_mask_seed(spec.seed, pi, s), sweep_init_seed(spec.seed, pi, s));
    });

    SweepResult res;
    res.algo = to_string(spec.settings.algo);
    res.param_name = param_name(spec.settings.algo);
    res.params = spec.params;
    res.ps = spec.ps;
    res.n_seeds = spec.n_seeds;
    for (auto& g : out)
        for (auto& r : g) res.rows.push_back(std::move(r));
    res.cells = aggregate(res.rows, res.params, res.ps);
    return res;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw format_error("not a number: '" + s + "'");
    return v;
}

inline std::uint64_t parse_u64(const std::string& s) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0') throw format_error("not an unsigned integer: '" + s + "'");
    return std::uint64_t(v);
}

inline const char* kResultsHeader = "algo,param_name,param_value,p,seed_mask,seed_init,rse_db,exact,iters,wall_ms";

inline void write_results_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << kResultsHeader << '\n';
    for (const auto& r : rows)
        out << r.algo << ',' << r.param_name << ',' << format_double(r.param_value) << ',' << format_double(r.p) << ','
            << r.seed_mask << ',' << r.seed_init << ',' << format_double(r.rse_db) << ',' << (r.exact ? 1 : 0) << ','
            << r.iters << ',' << format_double(r.wall_ms) << '\n';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> f;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) f.push_back(cur);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    return f;
}

inline std::vector<SweepRow> read_results_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw format_error("results csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kResultsHeader) throw format_error("results csv: unexpected header '" + line + "'");
    std::vector<SweepRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 10) throw format_error("results csv line " + std::to_string(lineno) + ": expected 10 fields");
        SweepRow r;
        r.algo = f[0];
        r.param_name = f[1];
        r.param_value = parse_double(f[2]);
        r.p = parse_double(f[3]);
        r.seed_mask = parse_u64(f[4]);
        r.seed_init = parse_u64(f[5]);
        r.rse_db = parse_double(f[6]);
        r.exact = f[7] == "1";
        r.iters = std::size_t(parse_u64(f[8]));
        r.wall_ms = parse_double(f[9]);
        rows.push_back(r);
    }
    return rows;
}

/// One point of the minimal-error curve: the parameter with the lowest mean RSE at p.
struct ReportRow {
    double p = 0.0;
    double best_param = 0.0;
    double min_rse_db = 0.0;
};

inline std::vector<ReportRow> report(const std::vector<SweepRow>& rows) {
    std::vector<double> ps, params;
    for (const auto& r : rows) {
        if (std::find(ps.begin(), ps.end(), r.p) == ps.end()) ps.push_back(r.p);
        if (std::find(params.begin(), params.end(), r.param_value) == params.end()) params.push_back(r.param_value);
    }
    std::sort(ps.begin(), ps.end());
    std::sort(params.begin(), params.end());
    const auto cells = aggregate(rows, params, ps);
    std::vector<ReportRow> out;
    for (double p : ps) {
        ReportRow best{p, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::infinity()};
        for (const auto& c : cells)
            if (c.p == p && c.n_ok > 0 && c.mean < best.min_rse_db) {
                best.min_rse_db = c.mean;
                best.best_param = c.param;
            }
        if (std::isinf(best.min_rse_db)) best.min_rse_db = std::numeric_limits<double>::quiet_NaN();
        out.push_back(best);
    }
    return out;
}

inline void write_report_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
    out << "p,best_param,min_rse_db\n";
    for (const auto& r : rows)
        out << format_double(r.p) << ',' << format_double(r.best_param) << ',' << format_double(r.min_rse_db) << '\n';
}

inline void write_records_csv(std::ostream& out, const std::vector<SliceCompletionRecord>& records) {
    out << "k,rho_initial,rho_reduced,status,slice_rse_db,iters\n";
    for (const auto& r : records)
        out << r.k << ',' << r.rho_initial << ',' << r.rho_reduced << ',' << to_string(r.status) << ','
            << format_double(r.slice_rse_db) << ',' << r.iterations << '\n';
}

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
    out << "iter,relative_residual,eta_x,eta_y\n";
    for (const auto& t : trace)
        out << t.iter << ',' << format_double(t.relative_residual) << ',' << format_double(t.eta_x) << ','
            << format_double(t.eta_y) << '\n';
}

} // namespace starcomplete
