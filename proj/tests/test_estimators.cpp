#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mflsi/bounds.hpp"
#include "mflsi/estimators.hpp"

using namespace mflsi;

namespace {

// F(mu) = int V dmu with V(x) = x^4/4 - x^2/2; no interaction.
class DoubleWellConfinement final : public MeanFieldEnergy {
public:
    std::string name() const override { return "double-well"; }
    double eval(const DiscreteMeasure& mu) const override {
        return mu.integrate([](const VecRef& x) { return v(x[0]); });
    }
    double flat_derivative(const DiscreteMeasure&, const VecRef& x) const override { return v(x[0]); }
    Vec intrinsic_grad(const DiscreteMeasure&, const VecRef& x) const override {
        return Vec::Constant(1, x[0] * x[0] * x[0] - x[0]);
    }
    Mat intrinsic_hess(const DiscreteMeasure&, const VecRef&, const VecRef&) const override { return Mat::Zero(1, 1); }
    Mat intrinsic_grad_jacobian(const DiscreteMeasure&, const VecRef& x) const override {
        return Mat::Constant(1, 1, 3.0 * x[0] * x[0] - 1.0);
    }
    double declared_lambda() const override { return 0.0; }
    double declared_Mmm() const override { return 0.0; }
    int required_dim() const override { return 1; }

    static double v(double x) { return 0.25 * x * x * x * x - 0.5 * x * x; }
};

Eigen::VectorXd ar1(double kappa, double dt, int n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> g;
    const double phi = std::exp(-kappa * dt);
    const double s = std::sqrt(1.0 - phi * phi);
    Eigen::VectorXd x(n);
    x[0] = g(gen);
    for (int i = 1; i < n; ++i) x[i] = phi * x[i - 1] + s * g(gen);
    return x;
}

ParticleSystem quadratic_system(double a, int n) {
    return ParticleSystem(std::make_shared<QuadraticMeanEnergy>(a), n, 1);
}

} // namespace

TEST(Autocorrelation, MatchesDirectSum) {
    const Eigen::VectorXd x = ar1(1.0, 0.1, 500, 1);
    const auto rho = detail::autocorrelation(x, 20);
    const double m = x.mean();
    double c0 = 0.0;
    for (int i = 0; i < 500; ++i) c0 += (x[i] - m) * (x[i] - m);
    for (int k : {0, 1, 7, 20}) {
        double ck = 0.0;
        for (int i = 0; i + k < 500; ++i) ck += (x[i] - m) * (x[i + k] - m);
        EXPECT_NEAR(rho[static_cast<std::size_t>(k)], ck / c0, 1e-12);
    }
}

TEST(AutocorrGap, ExactAr1) {
    const auto est = estimate_gap_autocorr(ar1(2.0, 0.01, 400000, 2), 0.01);
    ASSERT_TRUE(est.success);
    EXPECT_NEAR(est.rate, 2.0, 0.1);
    EXPECT_GT(est.std_error, 0.0);
    EXPECT_LT(est.std_error, 0.2);
    EXPECT_EQ(to_string(est.method), "autocorr-fit");
}

TEST(AutocorrGap, IidSeriesFlagged) {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> g;
    Eigen::VectorXd x(20000);
    for (auto& v : x) v = g(gen);
    const auto est = estimate_gap_autocorr(x, 0.1);
    EXPECT_TRUE(est.no_correlation);
    EXPECT_DOUBLE_EQ(est.rate, 10.0);
}

TEST(AutocorrGap, Errors) {
    EXPECT_THROW(estimate_gap_autocorr(Eigen::VectorXd::Zero(5), 0.1), Error);
    EXPECT_THROW(estimate_gap_autocorr(Eigen::VectorXd::Zero(100), 0.0), Error);
}

TEST(AutocorrGap, QuadraticMeanModeDecaysAtOneMinusA) {
    const auto sys = quadratic_system(0.5, 10);
    SimConfig cfg;
    cfg.step = 0.05;
    cfg.n_steps = 400000;
    cfg.burn_in = 2000;
    cfg.sampler = Sampler::MALA;
    cfg.seed = 17;
    const auto traj = run_chain(sys, cfg, {observables::mean()});
    const auto est = estimate_gap_autocorr(traj.series(0, 0), cfg.step);
    ASSERT_TRUE(est.success);
    EXPECT_NEAR(est.rate, 0.5, 0.05);
}

TEST(AutocorrGap, DoubleWellAgreesWithGrid) {
    const auto w = auto_window(DoubleWellConfinement::v);
    const double grid = grid_poincare(DoubleWellConfinement::v, w.lo, w.hi, 4001).gap;
    const ParticleSystem sys(std::make_shared<DoubleWellConfinement>(), 1, 1);
    SimConfig cfg;
    cfg.step = 0.05;
    cfg.n_steps = 2000000;
    cfg.burn_in = 1000;
    cfg.thin = 2;
    cfg.sampler = Sampler::MALA;
    cfg.seed = 4;
    const auto traj = run_chain(sys, cfg, {observables::particle(0)});
    const auto est = estimate_gap_autocorr(traj.series(0, 0), cfg.step * cfg.thin);
    ASSERT_TRUE(est.success);
    EXPECT_NEAR(est.rate, grid, 0.05 * grid);
}

TEST(VarianceDecay, OuGap) {
    const ParticleSystem sys(std::make_shared<QuadraticMeanEnergy>(0.0), 1, 1);
    SimConfig cfg;
    cfg.step = 0.005;
    cfg.replicas = 2000;
    cfg.seed = 8;
    cfg.sampler = Sampler::MALA;
    cfg.initial = InitialCondition::gaussian(4.0);
    const auto est = estimate_gap_variance_decay(sys, cfg, observables::particle(0), 8.0, 32);
    ASSERT_TRUE(est.success);
    EXPECT_NEAR(est.rate, 1.0, 0.05);
    EXPECT_GT(est.std_error, 0.0);
    EXPECT_FALSE(est.low_confidence);
    EXPECT_EQ(to_string(est.method), "variance-decay");
}

TEST(VarianceDecay, QuadraticMean) {
    const auto sys = quadratic_system(0.5, 10);
    SimConfig cfg;
    cfg.step = 0.01;
    cfg.replicas = 1000;
    cfg.seed = 9;
    cfg.sampler = Sampler::MALA;
    cfg.initial = InitialCondition::gaussian(4.0);
    const auto est = estimate_gap_variance_decay(sys, cfg, observables::mean(), 8.0, 16);
    ASSERT_TRUE(est.success);
    EXPECT_NEAR(est.rate, 0.5, 0.05);
}

TEST(VarianceDecay, ConstantObservable) {
    const auto sys = quadratic_system(0.5, 3);
    SimConfig cfg;
    cfg.replicas = 16;
    const Observable one{"one", [](const Configuration&) { return 1.0; }};
    const auto est = estimate_gap_variance_decay(sys, cfg, one, 1.0);
    EXPECT_TRUE(est.zero_variance);
    EXPECT_FALSE(est.success);
}

TEST(VarianceDecay, NeedsReplicas) {
    const auto sys = quadratic_system(0.5, 3);
    SimConfig cfg;
    cfg.replicas = 2;
    EXPECT_THROW(estimate_gap_variance_decay(sys, cfg, observables::mean(), 1.0), Error);
}

TEST(EntropyDecay, SoftModeShift) {
    const auto sys = quadratic_system(0.2, 50);
    const GaussianState init{Eigen::VectorXd::Ones(50), gaussian_flow(sys).covariance()};
    std::vector<double> times;
    for (int k = 0; k <= 40; ++k) times.push_back(0.25 * k);
    const auto curve = entropy_decay_gaussian(sys, init, times);
    EXPECT_NEAR(curve.exact_rate, 1.6, 1e-12);
    EXPECT_NEAR(curve.rate, 1.6, 0.016);
    EXPECT_LT(curve.floor, 1e-8);
    EXPECT_TRUE(curve.comparison_skipped);
    // H(0) = (1-a) N / 2 for a unit shift along the mean mode.
    EXPECT_NEAR(curve.entropy.front(), 0.5 * 0.8 * 50, 1e-9);
}

TEST(EntropyDecay, CovarianceMismatchDecaysAtExactRate) {
    const auto sys = quadratic_system(0.5, 6);
    const GaussianState init{Eigen::VectorXd::Constant(6, 0.5), 3.0 * Eigen::MatrixXd::Identity(6, 6)};
    std::vector<double> times;
    for (int k = 0; k <= 60; ++k) times.push_back(0.5 * k);
    const auto curve = entropy_decay_gaussian(sys, init, times, 0.1);
    EXPECT_NEAR(curve.rate, curve.exact_rate, 0.01 * curve.exact_rate);
    EXPECT_FALSE(curve.comparison_skipped);
    EXPECT_TRUE(curve.sound);
    for (std::size_t k = 1; k < curve.entropy.size(); ++k) EXPECT_LE(curve.entropy[k], curve.entropy[k - 1]);
}

TEST(EntropyDecay, StartAtEquilibrium) {
    const auto sys = quadratic_system(0.2, 5);
    const GaussianState init{Eigen::VectorXd::Zero(5), gaussian_flow(sys).covariance()};
    const auto curve = entropy_decay_gaussian(sys, init, {0.0, 1.0, 2.0});
    EXPECT_TRUE(curve.identically_zero);
    EXPECT_EQ(curve.floor, 0.0);
}

TEST(EntropyDecay, FitRecoversSyntheticFloor) {
    std::vector<double> t, h;
    for (int k = 0; k < 50; ++k) {
        t.push_back(0.2 * k);
        h.push_back(3.0 * std::exp(-0.7 * t.back()) + 0.01);
    }
    const auto fit = detail::fit_exp_floor(t, h);
    EXPECT_NEAR(fit.rate, 0.7, 1e-6);
    EXPECT_NEAR(fit.floor, 0.01, 1e-8);
    EXPECT_NEAR(fit.amplitude, 3.0, 1e-6);
}

TEST(ConditionalGap, QuadraticIsConstant) {
    const auto sys = quadratic_system(0.5, 20);
    SimConfig cfg;
    cfg.step = 0.05;
    cfg.n_steps = 1000;
    cfg.burn_in = 100;
    cfg.thin = 100;
    cfg.sampler = Sampler::MALA;
    cfg.seed = 1;
    const auto rep = conditional_gap_mc(sys, cfg, 0.975);
    ASSERT_EQ(rep.gaps.size(), 9u);
    EXPECT_NEAR(rep.min, 0.975, 1e-3);
    EXPECT_LT(rep.spread, 1e-6);
    EXPECT_TRUE(rep.pass);
    EXPECT_TRUE(rep.all_converged);
}

TEST(ConditionalGap, KernelAboveClaimedRho) {
    const KernelParams p{1.0, 0.5, 1.0, 0.5, 0.1};
    const auto ex = kernel_example_constants(p.L, p.alpha, p.eta, p.v1_sup);
    EXPECT_NEAR(ex.rho, std::exp(-1.0), 1e-15);
    const ParticleSystem sys(std::make_shared<PairwiseKernelEnergy>(p), 8, 1);
    SimConfig cfg;
    cfg.step = 0.05;
    cfg.n_steps = 2000;
    cfg.burn_in = 200;
    cfg.thin = 180;
    cfg.sampler = Sampler::MALA;
    cfg.seed = 2;
    const auto rep = conditional_gap_mc(sys, cfg, ex.rho);
    EXPECT_TRUE(rep.pass);
    EXPECT_GE(rep.min, ex.rho);
}
