#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "starcomplete/asd.hpp"
#include "test_support.hpp"

using namespace starcomplete;

namespace {

double dot_re(const Matrix& a, const Matrix& b) { return (a.conjugate().cwiseProduct(b)).sum().real(); }

// g(eta) = ||D - P((X - eta G) Y)||^2 for the X half-step.
double line_x(const Matrix& d, const SamplingPattern& om, const Matrix& x, const Matrix& g, const Matrix& y, double eta) {
    return om.project(Matrix(d - (x - eta * g) * y)).squaredNorm();
}

double line_y(const Matrix& d, const SamplingPattern& om, const Matrix& x, const Matrix& g, const Matrix& y, double eta) {
    return om.project(Matrix(d - x * (y - eta * g))).squaredNorm();
}

AsdConfig fixed_iterations(std::size_t n) {
    AsdConfig c;
    c.max_iters = n;
    c.tol_residual = 0.0;
    c.tol_stall = -1.0;
    return c;
}

} // namespace

TEST(Asd, FixedPoint) {
    CounterRng rng(61, 0);
    const Matrix x = sc_test::random_matrix(6, 2, rng);
    const Matrix y = sc_test::random_matrix(2, 7, rng);
    const SamplingPattern om = bernoulli(6, 7, 1, 0.6, 1);
    const Matrix d = om.project(Matrix(x * y));
    const AsdGradients g = asd_gradients(d, om, x, y);
    EXPECT_LT(g.grad_x.norm(), 1e-13);
    EXPECT_LT(g.grad_y.norm(), 1e-13);
    const AsdResult r = asd(d, om, {x, y});
    EXPECT_EQ(r.reason, StopReason::residual_tolerance);
    EXPECT_EQ(r.iterations, 0u);
    EXPECT_LT(r.relative_residual, 1e-14);
}

TEST(Asd, ExactRankOneFactorization) {
    Matrix d(2, 2);
    d << 1.0, 2.0, 2.0, 4.0;
    Matrix x(2, 1), y(1, 2);
    x << 1.0, 2.0;
    y << 1.0, 2.0;
    const AsdResult r = asd(d, SamplingPattern::full(2, 2, 1), {x, y});
    ASSERT_FALSE(r.trace.empty());
    EXPECT_EQ(r.trace[0].relative_residual, 0.0);
    EXPECT_EQ(r.iterations, 0u);
    EXPECT_EQ(r.factors.product(), d);
}

TEST(Asd, ZeroInitIsStationary) {
    CounterRng rng(62, 0);
    const SamplingPattern om = bernoulli(5, 6, 1, 0.7, 2);
    const Matrix d = om.project(sc_test::random_matrix(5, 6, rng));
    const AsdResult r = asd(d, om, {Matrix::Zero(5, 2), Matrix::Zero(2, 6)});
    EXPECT_EQ(r.reason, StopReason::stationary);
    EXPECT_EQ(r.iterations, 1u);
    EXPECT_DOUBLE_EQ(r.relative_residual, 1.0);
}

TEST(Asd, RejectsNonConformalInit) {
    const SamplingPattern om = SamplingPattern::full(4, 5, 1);
    const Matrix d = Matrix::Ones(4, 5);
    EXPECT_THROW(asd(d, om, {Matrix::Ones(3, 2), Matrix::Ones(2, 5)}), dimension_error);
    EXPECT_THROW(asd(d, om, {Matrix::Ones(4, 2), Matrix::Ones(3, 5)}), dimension_error);
    EXPECT_THROW(asd(d, SamplingPattern::full(4, 4, 1), {Matrix::Ones(4, 2), Matrix::Ones(2, 5)}), dimension_error);
}

TEST(ResidualUpdate, ZeroStepLeavesResidual) {
    CounterRng rng(63, 0);
    const Matrix r = sc_test::random_matrix(3, 4, rng);
    EXPECT_EQ(residual_update(r, 0.0, sc_test::random_matrix(3, 4, rng)), r);
    EXPECT_THROW(residual_update(r, 1.0, Matrix::Zero(4, 3)), dimension_error);
}

TEST(ResidualUpdate, OneStepMatchesRecomputation) {
    CounterRng rng(64, 0);
    const SamplingPattern om = bernoulli(3, 3, 1, 0.7, 5);
    const Matrix d = om.project(sc_test::random_matrix(3, 3, rng));
    const Matrix x = sc_test::random_matrix(3, 2, rng);
    const Matrix y = sc_test::random_matrix(2, 3, rng);
    const AsdGradients g = asd_gradients(d, om, x, y);
    const Matrix pgy = om.project(Matrix(g.grad_x * y));
    const double eta = g.grad_x.squaredNorm() / pgy.squaredNorm();
    const Matrix updated = residual_update(g.residual, eta, pgy);
    const Matrix direct = om.project(Matrix(d - (x - eta * g.grad_x) * y));
    EXPECT_LT((updated - direct).norm(), 1e-13 * d.norm());

    // The solver takes the same first step.
    const AsdResult run = asd(d, om, {x, y}, fixed_iterations(1));
    EXPECT_NEAR(run.trace[1].eta_x, eta, 1e-13 * eta);
}

TEST(ResidualUpdate, DriftBoundedWithRefresh) {
    CounterRng rng(65, 0);
    const SamplingPattern om = bernoulli(30, 40, 1, 0.5, 6);
    const Matrix d = om.project(sc_test::random_matrix(30, 40, rng));
    const Observations obs = Observations::from(d, om);
    const FactorPair init = gaussian_factors(30, 40, 3, d.norm(), rng, true);
    detail::AsdKernel kernel(obs, init);
    double worst = 0.0;
    for (std::size_t it = 1; it <= 500; ++it) {
        kernel.step_x();
        kernel.step_y();
        const FactorPair f = kernel.factors();
        const Matrix exact = om.project(Matrix(d - f.X * f.Y));
        double err = 0.0;
        const auto res = kernel.residual();
        for (std::size_t w = 0; w < obs.size(); ++w) err += std::norm(res[w] - exact(obs.row[w], obs.col[w]));
        worst = std::max(worst, std::sqrt(err) / d.norm());
        if (it % 100 == 0) kernel.refresh();
    }
    EXPECT_LE(worst, 1e-8);
}

TEST(Asd, ObjectiveMonotoneAtEveryHalfStep) {
    CounterRng rng(66, 0);
    for (int trial = 0; trial < 5; ++trial) {
        const SamplingPattern om = bernoulli(20, 25, 1, 0.4, 10 + trial);
        const Matrix d = om.project(sc_test::random_low_rank(20, 25, 3, rng, trial % 2));
        AsdConfig cfg = fixed_iterations(300);
        cfg.record_objective = true;
        const AsdResult r = asd(d, om, gaussian_factors(20, 25, 4, d.norm(), rng, trial % 2), cfg);
        ASSERT_EQ(r.objective.size(), 2 * r.iterations + 1);
        for (std::size_t s = 1; s < r.objective.size(); ++s)
            EXPECT_LE(r.objective[s], r.objective[s - 1] + 1e-12 * r.objective[0]) << trial << " " << s;
    }
}

TEST(Asd, LineSearchStationarity) {
    CounterRng rng(67, 0);
    for (int trial = 0; trial < 10; ++trial) {
        const SamplingPattern om = bernoulli(8, 9, 1, 0.5, 20 + trial);
        const Matrix d = om.project(sc_test::random_matrix(8, 9, rng));
        Matrix x = sc_test::random_matrix(8, 2, rng);
        const Matrix y = sc_test::random_matrix(2, 9, rng);

        AsdGradients g = asd_gradients(d, om, x, y);
        double eta = g.grad_x.squaredNorm() / om.project(Matrix(g.grad_x * y)).squaredNorm();
        double h = 1e-5 * eta;
        double g0 = line_x(d, om, x, g.grad_x, y, 0.0);
        double slope = (line_x(d, om, x, g.grad_x, y, eta + h) - line_x(d, om, x, g.grad_x, y, eta - h)) / (2 * h);
        EXPECT_LE(std::abs(slope), 1e-6 * g0);

        x -= eta * g.grad_x;
        g = asd_gradients(d, om, x, y);
        eta = g.grad_y.squaredNorm() / om.project(Matrix(x * g.grad_y)).squaredNorm();
        h = 1e-5 * eta;
        g0 = line_y(d, om, x, g.grad_y, y, 0.0);
        slope = (line_y(d, om, x, g.grad_y, y, eta + h) - line_y(d, om, x, g.grad_y, y, eta - h)) / (2 * h);
        EXPECT_LE(std::abs(slope), 1e-6 * g0);
    }
}

TEST(Asd, GradientMatchesFiniteDifferences) {
    CounterRng rng(68, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const SamplingPattern om = bernoulli(7, 6, 1, 0.6, 40 + trial);
        const Matrix d = om.project(sc_test::random_matrix(7, 6, rng));
        const Matrix x = sc_test::random_matrix(7, 3, rng), y = sc_test::random_matrix(3, 6, rng);
        const Matrix ex = sc_test::random_matrix(7, 3, rng), ey = sc_test::random_matrix(3, 6, rng);
        const AsdGradients g = asd_gradients(d, om, x, y);
        const double analytic = dot_re(g.grad_x, ex) + dot_re(g.grad_y, ey);
        const double h = 1e-5;
        const double numeric =
            (asd_objective(d, om, x + h * ex, y + h * ey) - asd_objective(d, om, x - h * ex, y - h * ey)) / (2 * h);
        EXPECT_LE(std::abs(analytic - numeric), 1e-6 * std::max(std::abs(analytic), std::abs(numeric))) << trial;
    }
}

TEST(Asd, CompletesLowRankMatrix) {
    CounterRng rng(69, 0);
    const Matrix a = sc_test::random_low_rank(50, 60, 3, rng);
    const SamplingPattern om = bernoulli(50, 60, 1, 0.5, 7);
    const Matrix d = om.project(a);
    AsdConfig cfg;
    cfg.max_iters = 1000;
    const AsdResult r = asd(d, om, gaussian_factors(50, 60, 3, d.norm() / std::sqrt(0.5), rng, false), cfg);
    EXPECT_EQ(r.reason, StopReason::residual_tolerance);
    EXPECT_LE(r.relative_residual, 1e-4);
    EXPECT_LT((r.factors.product() - a).norm() / a.norm(), 1e-2);
}

TEST(Asd, CostLinearInSampleCount) {
    CounterRng rng(70, 0);
    const Matrix d = sc_test::random_matrix(600, 600, rng, false);
    const FactorPair init = gaussian_factors(600, 600, 5, d.norm(), rng, false);
    auto timed = [&](double p) {
        const Observations obs = Observations::from(d, bernoulli(600, 600, 1, p, 8));
        double best = 1e300;
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            asd(obs, init, fixed_iterations(20));
            best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        return best;
    };
    const double ratio = timed(0.4) / timed(0.2);
    EXPECT_GE(ratio, 1.6);
    EXPECT_LE(ratio, 2.6);
}

TEST(Knee, HandExamples) {
    const std::vector<double> elbow{1.0, 0.1, 0.09, 0.089};
    Knee k = knee_detect(elbow);
    EXPECT_TRUE(k.found);
    EXPECT_EQ(k.index, 2u);

    const std::vector<double> linear{5.0, 4.0, 3.0, 2.0, 1.0};
    k = knee_detect(linear);
    EXPECT_FALSE(k.found);
    EXPECT_EQ(k.index, 5u);

    const std::vector<double> flat{2.0, 2.0, 2.0};
    k = knee_detect(flat);
    EXPECT_FALSE(k.found);
    EXPECT_EQ(k.index, 1u);

    const std::vector<double> two{1.0, 0.5};
    EXPECT_THROW(knee_detect(two), contract_error);
}

TEST(Knee, GradientThreshold) {
    const std::vector<double> v{1.0, 0.1, 0.095, 0.094};
    const Knee k = knee_detect(v, KneeMethod::gradient_threshold, 0.01);
    EXPECT_TRUE(k.found);
    EXPECT_EQ(k.index, 2u);
    const std::vector<double> steep{1.0, 0.5, 0.25};
    EXPECT_FALSE(knee_detect(steep, KneeMethod::gradient_threshold, 0.01).found);
}

TEST(Looped, SingleRankIsOneAsdRun) {
    CounterRng data(71, 0);
    const SamplingPattern om = bernoulli(12, 15, 1, 0.5, 9);
    const Matrix d = om.project(sc_test::random_low_rank(12, 15, 1, data));
    const Observations obs = Observations::from(d, om);
    LoopedConfig cfg;
    cfg.r_max = 1;
    cfg.seed = 123;
    const LoopedResult got = looped_asd(obs, cfg);
    ASSERT_EQ(got.rank, 1u);
    ASSERT_EQ(got.test_errors.size(), 1u);

    // Replay of the degenerate loop: fold split, one rescaled column pair, ASD on the
    // training entries, then the rank-1 SVD projection completed on every sample.
    CounterRng rng(cfg.seed, 0x100);
    std::vector<std::size_t> perm(obs.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t a = perm.size(); a > 1; --a) std::swap(perm[a - 1], perm[rng.below(a)]);
    std::vector<std::size_t> order(cfg.folds);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t a = cfg.folds; a > 1; --a) std::swap(order[a - 1], order[rng.below(a)]);
    std::vector<std::uint8_t> test(obs.size(), 0);
    for (std::size_t s = 0; s < perm.size(); ++s)
        if (s % cfg.folds == order[0]) test[perm[s]] = 1;
    std::vector<std::size_t> train;
    for (std::size_t s = 0; s < obs.size(); ++s)
        if (!test[s]) train.push_back(s);
    const double p = double(obs.size()) / (12.0 * 15.0);
    const Vector x = rescaled_gaussian(12, 1, p, obs.norm(), rng, true);
    const Vector y = rescaled_gaussian(15, 1, p, obs.norm(), rng, true);
    const AsdResult inner = asd(obs.subset(train), {Matrix(x), Matrix(y.adjoint())}, cfg.inner);
    // Real data: the final run restarts from the best real rank-1 approximation.
    const Eigen::MatrixXd re = inner.factors.product().real();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(re, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Matrix u = svd.matrixU().leftCols(1).cast<cplx>();
    const Matrix vh = svd.singularValues()(0) * svd.matrixV().leftCols(1).transpose().cast<cplx>();
    const AsdResult expect = asd(obs, {u, vh}, cfg.final);
    EXPECT_TRUE(got.factors.product().imag().isZero(0.0));
    EXPECT_EQ(got.factors.X, expect.factors.X);
    EXPECT_EQ(got.factors.Y, expect.factors.Y);
}

TEST(Looped, RescaledGaussianNorm) {
    CounterRng rng(72, 0);
    for (std::size_t j = 1; j <= 4; ++j) {
        const Vector v = rescaled_gaussian(30, j, 0.25, 8.0, rng, true);
        EXPECT_NEAR(v.norm(), std::ldexp(1.0, -int(j)) * 0.5 / 8.0, 1e-15);
    }
}

TEST(Looped, NoisyCurveDropsThenFlattens) {
    int good = 0;
    for (std::uint64_t seed = 0; seed < 7; ++seed) {
        CounterRng rng(73, seed);
        const Matrix a = sc_test::random_low_rank(40, 50, 3, rng);
        Matrix noise = sc_test::random_matrix(40, 50, rng, false);
        noise *= 1e-3 * a.norm() / noise.norm();
        const SamplingPattern om = bernoulli(40, 50, 1, 0.5, 100 + seed);
        LoopedConfig cfg;
        cfg.r_max = 8;
        cfg.seed = seed;
        const LoopedResult r = looped_asd(Matrix(om.project(Matrix(a + noise))), om, cfg);
        const auto& t = r.test_errors;
        const bool drops = t[0] > t[1] && t[1] > t[2];
        bool flat = true;
        for (std::size_t j = 3; j < t.size(); ++j) flat = flat && t[j] < 3.0 * t[2] && t[j] > t[2] / 3.0;
        good += drops && flat && r.rank == 3;
    }
    EXPECT_GE(good, 4);
}

TEST(Looped, Errors) {
    const Observations obs = Observations::from(Matrix::Ones(4, 5), SamplingPattern::full(4, 5, 1));
    LoopedConfig cfg;
    cfg.r_max = 5;
    EXPECT_THROW(looped_asd(obs, cfg), contract_error);
    cfg.r_max = 2;
    cfg.folds = 1;
    EXPECT_THROW(looped_asd(obs, cfg), contract_error);
    EXPECT_EQ(default_r_max(100, 200), 60u);
    EXPECT_EQ(default_r_max(10, 200), 10u);
}

TEST(LowRankSvd, MatchesDenseSvd) {
    CounterRng rng(74, 0);
    const Matrix x = sc_test::random_matrix(9, 3, rng), y = sc_test::random_matrix(3, 11, rng);
    const LowRankSvd s = low_rank_svd(x, y);
    const Matrix rebuilt = s.U * s.s.cast<cplx>().asDiagonal() * s.V.adjoint();
    EXPECT_LT(sc_test::rel_diff(rebuilt, Matrix(x * y)), 1e-13);
    Eigen::JacobiSVD<Matrix> ref(x * y);
    for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(s.s(i), ref.singularValues()(i), 1e-12 * ref.singularValues()(0));
    EXPECT_LT((s.U.adjoint() * s.U - Matrix::Identity(3, 3)).norm(), 1e-13);
}
