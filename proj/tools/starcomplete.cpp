#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "starcomplete/starcomplete.hpp"

using namespace starcomplete;

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw format_error("cannot open " + path + " for writing");
    return out;
}

/// "dft", "dct", "identity" or "matrix:<path>" where the file holds an n3 x n3 x 1 TNS1 tensor.
Transform load_transform(const std::string& spec, std::size_t n3) {
    if (spec.rfind("matrix:", 0) == 0) {
        const Tensor3 t = load_tns(spec.substr(7));
        if (t.n3() != 1) throw dimension_error("transform matrix file must have n3 = 1");
        const Transform m = Transform::from_matrix(t.frontal(0));
        if (m.n3() != n3) throw dimension_error("transform size does not match the tensor's third extent");
        return m;
    }
    return Transform::from_name(spec, n3);
}

std::vector<double> range_grid(double lo, double hi, double step) {
    std::vector<double> out;
    for (std::size_t i = 0;; ++i) {
        const double v = lo + double(i) * step;
        if (v > hi + 1e-9 * step) break;
        out.push_back(std::round(v * 1e12) / 1e12);
    }
    return out;
}

void print_trace(const std::string& path, const std::vector<TraceRow>& trace) {
    if (path.empty()) return;
    auto out = open_out(path);
    write_trace_csv(out, trace);
}

struct SynthOpts {
    std::size_t n1 = 152, n2 = 40, n3 = 40, materials = 3, trank = 0;
    std::vector<std::size_t> multirank;
    double sigma = 0.0;
    std::uint64_t seed = 0;
    std::string transform = "dft", out, clean;
};

int run_synth(const SynthOpts& o) {
    Tensor3 clean, noisy;
    if (!o.multirank.empty() || o.trank > 0) {
        const std::size_t n3 = o.multirank.empty() ? o.n3 : o.multirank.size();
        const Transform m = load_transform(o.transform, n3);
        clean = o.multirank.empty() ? synthetic_trank(o.n1, o.n2, n3, o.trank, m, o.seed)
                                    : synthetic_multirank(o.n1, o.n2, o.multirank, m, o.seed);
        noisy = clean;
        if (o.sigma > 0.0) {
            CounterRng rng(o.seed, 0x4E);
            Tensor3 noise(clean.n1(), clean.n2(), clean.n3());
            for (auto& z : noise.data()) z = rng.normal();
            noisy += cplx(o.sigma * frobenius_norm(clean) / frobenius_norm(noise)) * noise;
        }
    } else {
        PhantomData ph = make_phantom_data({o.n1, o.n2, o.n3, o.materials, o.sigma, o.seed});
        clean = std::move(ph.clean);
        noisy = std::move(ph.noisy);
    }
    save_tns(o.out, noisy);
    if (!o.clean.empty()) save_tns(o.clean, clean);
    std::printf("wrote %zu x %zu x %zu tensor to %s\n", noisy.n1(), noisy.n2(), noisy.n3(), o.out.c_str());
    return 0;
}

struct SampleOpts {
    std::size_t n1 = 0, n2 = 0, n3 = 1;
    std::string like, pattern = "robust-raster", out;
    double p = 0.1;
    std::uint64_t seed = 0;
};

int run_sample(SampleOpts o) {
    if (!o.like.empty()) {
        const Tensor3 t = load_tns(o.like);
        o.n1 = t.n1();
        o.n2 = t.n2();
        o.n3 = t.n3();
    }
    if (o.n1 == 0 || o.n2 == 0 || o.n3 == 0) throw dimension_error("sample: give --like or all of --n1 --n2 --n3");
    const SamplingPattern om = make_pattern(parse_pattern_kind(o.pattern), o.n1, o.n2, o.n3, o.p, o.seed);
    save_tns(o.out, om.indicator());
    std::printf("sampled %zu of %zu entries (ratio %.6f) to %s\n", om.count(), om.n1() * om.n2() * om.n3(), om.realized_ratio(),
                o.out.c_str());
    return 0;
}

struct SolverOpts {
    std::string in, mask, algo, out, trace, rank = "auto", records, transform = "dft";
    std::size_t t = 0, r_max = 0, max_iters = 5000, threads = 1, final_max_iters = 0;
    double gamma = 1.0, tol = 1e-4, final_tol = 0.0;
    std::uint64_t seed = 0;
    bool no_symmetry = false, no_zero_slice_rule = false;
    std::vector<std::size_t> skip;
};

AsdConfig asd_config(const SolverOpts& o) {
    AsdConfig c;
    c.max_iters = o.max_iters;
    c.tol_residual = o.tol;
    return c;
}

LoopedConfig looped_config(const SolverOpts& o) {
    LoopedConfig c;
    c.r_max = o.r_max;
    c.seed = o.seed;
    c.inner = asd_config(o);
    c.final = asd_config(o);
    if (o.final_tol > 0.0) c.final.tol_residual = o.final_tol;
    if (o.final_max_iters > 0) c.final.max_iters = o.final_max_iters;
    return c;
}

int run_complete_matrix(const SolverOpts& o) {
    const Tensor3 d = load_tns(o.in);
    const SamplingPattern om = SamplingPattern::from_tensor(load_tns(o.mask));
    if (!d.same_shape(om.indicator())) throw dimension_error("data and mask extents differ");
    const SamplingPattern flat = om.flattened();
    const Observations obs = Observations::from(flatten(d), flat);

    Matrix z;
    std::vector<TraceRow> trace;
    if (o.algo == "looped") {
        LoopedConfig cfg = looped_config(o);
        if (o.rank != "auto") cfg.fixed_rank = std::size_t(parse_u64(o.rank));
        const LoopedResult r = looped_asd(obs, cfg);
        z = r.factors.product();
        trace = r.final_run.trace;
        std::printf("rank %zu%s, final relative residual %.3e after %zu iterations\n", r.rank,
                    r.knee_suspicious ? " (knee flagged as suspicious)" : "", r.final_run.relative_residual,
                    r.final_run.iterations);
    } else if (o.algo == "asd") {
        if (o.rank == "auto") throw contract_error("--algo asd needs an explicit --rank (auto requires looped)");
        const std::size_t r = std::size_t(parse_u64(o.rank));
        CounterRng rng(o.seed, 0x70);
        const double target = om.count() > 0 ? obs.norm() / std::sqrt(om.realized_ratio()) : 0.0;
        const AsdResult res = asd(obs, gaussian_factors(obs.n1, obs.n, r, target, rng, !obs.is_real()), asd_config(o));
        z = res.factors.product();
        trace = res.trace;
        std::printf("relative residual %.3e after %zu iterations (%s)\n", res.relative_residual, res.iterations,
                    to_string(res.reason).c_str());
    } else {
        throw contract_error("complete-matrix: --algo must be asd or looped");
    }
    save_tns(o.out, unflatten(z, d.n1(), d.n2(), d.n3()));
    print_trace(o.trace, trace);
    return 0;
}

int run_complete_tensor(const SolverOpts& o) {
    const Tensor3 d = load_tns(o.in);
    const SamplingPattern om = SamplingPattern::from_tensor(load_tns(o.mask));
    const Transform m = load_transform(o.transform, d.n3());
    const Tensor3 observed = om.project(d);

    if (o.algo == "tasd") {
        if (o.t == 0) throw contract_error("--algo tasd needs --t >= 1");
        CounterRng rng(o.seed, 0x71);
        const double target = om.count() > 0 ? frobenius_norm(observed) / std::sqrt(om.realized_ratio()) : 0.0;
        const TensorFactorPair init =
            random_tensor_factors(d.n1(), d.n2(), d.n3(), o.t, target, m, rng, !observed.is_real());
        const TasdResult r = tasd(observed, om, init, m, asd_config(o));
        save_tns(o.out, r.factors.product(m));
        print_trace(o.trace, r.trace);
        std::printf("relative residual %.3e after %zu iterations (%s, %s kernel)\n", r.relative_residual, r.iterations,
                    to_string(r.reason).c_str(), r.slice_kernel ? "slice" : "dense");
    } else if (o.algo == "tasdii") {
        TasdiiConfig cfg;
        cfg.gamma = o.gamma;
        cfg.looped = looped_config(o);
        cfg.zero_slice_rule = !o.no_zero_slice_rule;
        cfg.conjugate_symmetry = !o.no_symmetry;
        cfg.threads = o.threads;
        for (std::size_t k : o.skip) {
            if (k == 0 || k > d.n3()) throw contract_error("--skip takes one-based slice numbers in [1, n3]");
            cfg.skip.push_back(k - 1);
        }
        const TasdiiResult r = tasdii(observed, om, m, cfg);
        save_tns(o.out, r.Z);
        if (!o.records.empty()) {
            auto out = open_out(o.records);
            write_records_csv(out, r.records);
        }
        if (!r.warning.empty()) std::fprintf(stderr, "warning: %s\n", r.warning.c_str());
        std::printf("t-rank %zu, implicit rank %zu, multirank", r.ranks.t_rank, r.ranks.implicit_rank);
        for (std::size_t v : r.ranks.multirank) std::printf(" %zu", v);
        std::printf("\n");
    } else {
        throw contract_error("complete-tensor: --algo must be tasd or tasdii");
    }
    return 0;
}

struct SweepOpts {
    std::string in, truth, algo = "tasdii", pattern = "robust-raster", transform = "dft", out = "results.csv";
    std::vector<double> params, ps;
    std::size_t n_seeds = 1, threads = 1, max_iters = 5000, r_max = 0;
    double tol = 1e-4;
    std::uint64_t seed = 0;
};

int run_sweep(const SweepOpts& o) {
    const Tensor3 data = load_tns(o.in);
    const Tensor3 truth = o.truth.empty() ? data : load_tns(o.truth);
    SweepSpec spec;
    spec.settings.algo = parse_algorithm(o.algo);
    spec.settings.pattern = parse_pattern_kind(o.pattern);
    spec.settings.transform = o.transform;
    spec.settings.asd.max_iters = o.max_iters;
    spec.settings.asd.tol_residual = o.tol;
    spec.settings.tasdii.looped.r_max = o.r_max;
    spec.settings.tasdii.looped.inner = spec.settings.asd;
    spec.settings.tasdii.looped.final = spec.settings.asd;
    spec.params = o.params;
    if (spec.params.empty())
        spec.params = spec.settings.algo == Algorithm::tasdii ? std::vector<double>{0.9, 0.99, 0.999, 0.9999, 1.0}
                                                              : range_grid(1, 10, 1);
    spec.ps = o.ps.empty() ? range_grid(0.05, 0.5, 0.05) : o.ps;
    spec.n_seeds = o.n_seeds;
    spec.seed = o.seed;
    spec.threads = o.threads;
    const SweepResult res = sweep(truth, data, spec);
    auto out = open_out(o.out);
    write_results_csv(out, res.rows);
    std::printf("%zu rows written to %s\n", res.rows.size(), o.out.c_str());
    return 0;
}

int run_report(const std::string& in, const std::string& out) {
    std::ifstream f(in);
    if (!f) throw format_error("cannot open " + in);
    const auto rows = report(read_results_csv(f));
    if (out.empty() || out == "-") {
        write_report_csv(std::cout, rows);
    } else {
        auto o = open_out(out);
        write_report_csv(o, rows);
    }
    return 0;
}

void add_solver_flags(CLI::App* cmd, SolverOpts& o) {
    cmd->add_option("--in", o.in, "observed data (TNS1); unsampled entries are ignored")->required();
    cmd->add_option("--mask", o.mask, "0/1 mask (TNS1) with the data's extents")->required();
    cmd->add_option("--out", o.out, "completed tensor (TNS1)")->required();
    cmd->add_option("--seed", o.seed, "initialization seed");
    cmd->add_option("--max-iters", o.max_iters, "iteration cap per solve");
    cmd->add_option("--tol", o.tol, "relative residual tolerance");
    cmd->add_option("--r-max", o.r_max, "largest rank tried by LoopedASD (0: min(n1, n, 60))");
    cmd->add_option("--final-tol", o.final_tol, "residual tolerance of the final LoopedASD run (default: --tol)");
    cmd->add_option("--final-max-iters", o.final_max_iters, "iteration cap of the final LoopedASD run");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-rank matrix and third-order tensor completion under the star-M product"};
    app.require_subcommand(1);

    SynthOpts so;
    auto* synth = app.add_subcommand("synth", "write a synthetic tensor");
    synth->add_option("--n1", so.n1);
    synth->add_option("--n2", so.n2);
    synth->add_option("--n3", so.n3);
    synth->add_option("--materials", so.materials, "phantom: number of spectral components");
    synth->add_option("--trank", so.trank, "instead of a phantom: random tensor of this t-rank");
    synth->add_option("--multirank", so.multirank, "instead of a phantom: comma-separated per-slice ranks")
        ->delimiter(',');
    synth->add_option("--transform", so.transform, "transform for --trank / --multirank");
    synth->add_option("--sigma", so.sigma, "noise level, ||N|| = sigma ||A||");
    synth->add_option("--seed", so.seed);
    synth->add_option("--out", so.out, "noisy tensor (TNS1)")->required();
    synth->add_option("--clean", so.clean, "also write the noise-free tensor here");

    SampleOpts sa;
    auto* sample = app.add_subcommand("sample", "write a 0/1 sampling mask");
    sample->add_option("--like", sa.like, "take extents from this TNS1 file");
    sample->add_option("--n1", sa.n1);
    sample->add_option("--n2", sa.n2);
    sample->add_option("--n3", sa.n3);
    sample->add_option("--pattern", sa.pattern)->check(CLI::IsMember({"bernoulli", "raster", "robust-raster"}));
    sample->add_option("--p", sa.p, "undersampling ratio")->check(CLI::Range(0.0, 1.0));
    sample->add_option("--seed", sa.seed);
    sample->add_option("--out", sa.out)->required();

    SolverOpts mo;
    auto* cm = app.add_subcommand("complete-matrix", "ASD / LoopedASD on the flattened data");
    add_solver_flags(cm, mo);
    cm->add_option("--algo", mo.algo)->required()->check(CLI::IsMember({"asd", "looped"}));
    cm->add_option("--rank", mo.rank, "integer rank, or auto (looped only)");
    cm->add_option("--trace", mo.trace, "per-iteration CSV");

    SolverOpts to;
    auto* ct = app.add_subcommand("complete-tensor", "TASD / TASDII");
    add_solver_flags(ct, to);
    ct->add_option("--algo", to.algo)->required()->check(CLI::IsMember({"tasd", "tasdii"}));
    ct->add_option("--t", to.t, "TASD tubal rank");
    ct->add_option("--gamma", to.gamma, "TASDII energy fraction in (0, 1]");
    ct->add_option("--transform", to.transform, "dft, dct, identity or matrix:<path>");
    ct->add_flag("--no-symmetry", to.no_symmetry, "solve every DFT slice instead of mirroring conjugate pairs");
    ct->add_flag("--no-zero-slice-rule", to.no_zero_slice_rule, "keep neighbors of rank-0 slices");
    ct->add_option("--skip", to.skip, "one-based slices forced to zero")->delimiter(',');
    ct->add_option("--threads", to.threads, "TASDII slice workers");
    ct->add_option("--records", to.records, "TASDII per-slice CSV");
    ct->add_option("--trace", to.trace, "TASD per-iteration CSV");

    SweepOpts sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "(parameter, p) grid over seeds, written as results.csv");
    sweep_cmd->add_option("--in", sw.in, "data tensor that gets sampled (TNS1)")->required();
    sweep_cmd->add_option("--truth", sw.truth, "reference for RSE (default: --in)");
    sweep_cmd->add_option("--algo", sw.algo)->check(CLI::IsMember({"asd", "tasd", "tasdii"}));
    sweep_cmd->add_option("--params", sw.params, "r, t or gamma values (comma-separated)")->delimiter(',');
    sweep_cmd->add_option("--ps", sw.ps, "undersampling ratios (comma-separated)")->delimiter(',');
    sweep_cmd->add_option("--seeds", sw.n_seeds, "repetitions per cell");
    sweep_cmd->add_option("--seed", sw.seed, "base seed of the ledger");
    sweep_cmd->add_option("--threads", sw.threads);
    sweep_cmd->add_option("--pattern", sw.pattern)->check(CLI::IsMember({"bernoulli", "raster", "robust-raster"}));
    sweep_cmd->add_option("--transform", sw.transform)->check(CLI::IsMember({"dft", "dct", "identity"}));
    sweep_cmd->add_option("--max-iters", sw.max_iters);
    sweep_cmd->add_option("--tol", sw.tol);
    sweep_cmd->add_option("--r-max", sw.r_max);
    sweep_cmd->add_option("--out", sw.out);

    std::string rep_in, rep_out;
    auto* rep = app.add_subcommand("report", "minimum mean RSE over the parameter, per p");
    rep->add_option("--in", rep_in, "results.csv")->required();
    rep->add_option("--out", rep_out, "output CSV (default: stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return run_synth(so);
        if (*sample) return run_sample(sa);
        if (*cm) return run_complete_matrix(mo);
        if (*ct) return run_complete_tensor(to);
        if (*sweep_cmd) return run_sweep(sw);
        if (*rep) return run_report(rep_in, rep_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
