#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mflsi/verify.hpp"
#include "test_support.hpp"

using namespace mflsi;
namespace mt = mflsi::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string failed_rows(const SuiteReport& rep) {
    std::ostringstream os;
    int bad = 0;
    for (const auto& r : rep.rows)
        if (!r.pass) {
            if (bad++ < 3) os << " [" << r.check << " = " << r.value << ", want " << r.relation << "]";
        }
    if (bad == 0) return std::to_string(rep.rows.size()) + " checks";
    return std::to_string(bad) + " of " + std::to_string(rep.rows.size()) + " checks failed:" + os.str();
}

ExperimentConfig quadratic_cfg(double a, int n) {
    ExperimentConfig cfg;
    cfg.energy.type = "quadratic";
    cfg.energy.a = a;
    cfg.system.N = n;
    cfg.system.d = 1;
    cfg.from_file = true;
    return cfg;
}

Outcome sharpness() {
    ExperimentConfig cfg = quadratic_cfg(0.5, 20);
    const auto rep = verify_sharpness(cfg);
    const auto ex = quadratic_example_constants(0.5, 20);
    const double exact = gaussian_exact(ParticleSystem(std::make_shared<QuadraticMeanEnergy>(0.5), 20, 1)).poincare;
    const bool headline = std::abs(ex.theorem_bound - 0.45) <= 4.0 * std::numeric_limits<double>::epsilon() && std::abs(exact - 0.5) <= 1e-10;
    std::ostringstream os;
    os.precision(17);
    os << "bound=" << ex.theorem_bound << " exact=" << exact << "; " << failed_rows(rep);
    return {rep.pass() && headline, os.str()};
}

Outcome conditional() {
    ExperimentConfig cfg = quadratic_cfg(0.5, 20);
    cfg.sim.step = 0.05;
    cfg.sim.burn_in = 500;
    cfg.sim.seed = 11;
    cfg.analysis.tolerance = 1e-3;
    const auto rep = verify_conditional(cfg, 50);
    return {rep.pass(), "min gap " + detail::fmt(rep.rows[0].value) + "; " + failed_rows(rep)};
}

Outcome curvature() {
    bool ok = true;
    std::string msg;
    for (int d : {1, 2}) {
        ExperimentConfig cfg;
        cfg.system.d = d;
        cfg.sim.seed = 21 + d;
        const auto rep = verify_curvature(cfg, 1000);
        ok = ok && rep.pass();
        msg += "d=" + std::to_string(d) + ": " + failed_rows(rep) + "; ";
    }
    return {ok, msg};
}

Outcome hessian() {
    ExperimentConfig cfg;
    cfg.sim.seed = 31;
    std::mt19937_64 gen(31);
    std::normal_distribution<double> g(0.0, 1.5);
    const int n = 8;
    std::vector<Configuration> xs;
    for (int k = 0; k < 100; ++k) {
        Configuration x(n, 1);
        for (int i = 0; i < n; ++i) x(i, 0) = g(gen);
        xs.push_back(std::move(x));
    }
    const double a = 0.5, alpha = 0.05;
    const QuadraticMeanEnergy q(a);
    const PairwiseKernelEnergy k(KernelParams{1.0, 0.0, 1.0, 1.0, alpha});
    const double q_min = hessian_block_bound(q, xs).min_ratio * n;
    const double k_min = hessian_block_bound(k, xs).min_ratio * n;
    const bool ok = std::abs(q_min + a * n) <= 1e-9 && k_min >= -2.0 * alpha * n - 1e-9 && verify_hessian(cfg).pass();
    return {ok, "quadratic lambda_min=" + detail::fmt(q_min) + " (want -4), kernel lambda_min=" + detail::fmt(k_min) +
                    " (want >= -0.8)"};
}

Outcome constants_algebra() {
    const LsiInputs worked{1.0, 0.1, 1.0, 1.0, 0.5, 100, 1};
    const auto r = defective_lsi_constants(worked);
    bool ok = std::abs(r.N0 - 140.0 / 3.0) <= 1e-6 && std::abs(r.lambda_tilde - 0.17) <= 1e-6 &&
              std::abs(r.beta_N - 0.515152) <= 1e-6 && std::abs(r.rho_prime_star - 0.484848) <= 1e-6 &&
              std::abs(r.delta_N - 12.0) <= 1e-6;
    std::mt19937_64 gen(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int mismatches = 0;
    for (int k = 0; k < 1000; ++k) {
        LsiInputs in;
        in.rho = 0.2 + 2.0 * u(gen);
        in.lambda_prime = 0.4 * in.rho * u(gen);
        in.alpha_N = u(gen);
        in.Mmm = 3.0 * u(gen);
        in.epsilon = 0.05 + 0.9 * u(gen);
        in.N = 1 + static_cast<int>(2000.0 * u(gen));
        in.d = 1 + k % 3;
        const auto c = defective_lsi_constants(in);
        const bool beta_unit = std::isfinite(c.beta_N) && c.beta_N > 0.0 && c.beta_N < 1.0;
        if (beta_unit != (in.N > c.N0)) ++mismatches;
    }
    ok = ok && mismatches == 0;
    std::ostringstream os;
    os << "N0=" << r.N0 << " lambda_tilde=" << r.lambda_tilde << " beta=" << r.beta_N << " rho'=" << r.rho_prime_star
       << " delta=" << r.delta_N << "; grid mismatches " << mismatches << "/1000";
    return {ok, os.str()};
}

Outcome soundness() {
    const double a = 0.2;
    const auto base = constants_for(quadratic_cfg(a, 100));
    const auto f = quadratic_as_parametrized(a, 1);
    double worst = 0.0;
    int applicable = 0;
    for (int n : {100, 1000}) {
        const auto ex = quadratic_example_constants(a, n);
        for (int k = 1; k <= 99; ++k) {
            const double eps = 0.01 * k;
            const auto cb = parametrized_cost_bound(*f, base.var_phi, eps);
            const auto r = constants_report(ex.inputs, {1.0, cb.lambda_prime, cb.alpha_N, a, eps, n, 1});
            if (!r.rho_star) continue;
            ++applicable;
            worst = std::max(worst, *r.rho_star);
        }
    }
    return {applicable > 0 && worst <= 1.0 - a,
            "max rho_star=" + detail::fmt(worst) + " over " + std::to_string(applicable) + " applicable eps (exact 0.8)"};
}

Outcome entropy() {
    const auto rep = verify_entropy(quadratic_cfg(0.2, 50));
    return {rep.pass(), failed_rows(rep)};
}

struct BatchStat {
    double mean = 0.0;
    double se = 0.0;
};

BatchStat batch_means(const Eigen::VectorXd& v, int batches = 50) {
    const Eigen::Index len = v.size() / batches;
    Eigen::VectorXd b(batches);
    for (int i = 0; i < batches; ++i) b[i] = v.segment(i * len, len).mean();
    const double m = b.mean();
    const double var = (b.array() - m).square().sum() / (batches - 1);
    return {m, std::sqrt(var / batches)};
}

Outcome samplers() {
    const int n = 10;
    const ParticleSystem sys(std::make_shared<QuadraticMeanEnergy>(0.5), n, 1);
    const Eigen::MatrixXd cov = gaussian_exact(sys).covariance;
    const double want_var_mean = cov.sum() / (n * n);
    const double want_cov = cov.row(0).sum() / n;
    const double want_var1 = cov(0, 0);

    SimConfig cfg;
    cfg.step = 0.05;
    cfg.n_steps = 1000000;
    cfg.burn_in = 1000;
    cfg.sampler = Sampler::MALA;
    cfg.seed = 51;
    const auto traj = run_chain(sys, cfg, {observables::mean(), observables::particle(0)});
    const Eigen::VectorXd m = traj.series(0, 0), x1 = traj.series(0, 1);
    const BatchStat vm = batch_means(m.array().square().matrix());
    const BatchStat cv = batch_means((m.array() * x1.array()).matrix());
    const BatchStat v1 = batch_means(x1.array().square().matrix());
    const bool mala_ok = std::abs(vm.mean - want_var_mean) <= 3.0 * vm.se && std::abs(cv.mean - want_cov) <= 3.0 * cv.se &&
                         std::abs(v1.mean - want_var1) <= 3.0 * v1.se;

    const ParticleSystem ou(std::make_shared<QuadraticMeanEnergy>(0.0), 1, 1);
    SimConfig ucfg;
    ucfg.step = 0.1;
    ucfg.n_steps = 1000000;
    ucfg.burn_in = 1000;
    ucfg.sampler = Sampler::ULA;
    ucfg.seed = 52;
    const Eigen::VectorXd y = run_chain(ou, ucfg, {observables::particle(0)}).series(0, 0);
    const double uvar = (y.array() - y.mean()).square().mean();
    const double want_u = 1.0 / (1.0 - 0.05);
    const bool ula_ok = std::abs(uvar - want_u) <= 0.02 * want_u;

    std::ostringstream os;
    os << "MALA Var(mean)=" << vm.mean << "+-" << vm.se << " (" << want_var_mean << "), Cov=" << cv.mean << "+-" << cv.se
       << " (" << want_cov << "), Var(x1)=" << v1.mean << "+-" << v1.se << " (" << want_var1 << "); ULA var=" << uvar
       << " (" << want_u << ")";
    return {mala_ok && ula_ok, os.str()};
}

Outcome kernel() {
    const auto ex = kernel_example_constants(1.0, 0.05, 1.0, 0.0);
    bool ok = std::abs(ex.Mmm - 3.57151) <= 1e-5 && std::abs(ex.rho - 0.367879) <= 1e-5 &&
              std::abs(ex.beta_max - 1.60944) <= 1e-5;
    double worst_norm = 0.0;
    for (int d : {1, 2}) {
        const PairwiseKernelEnergy f(KernelParams{1.0, 0.0, 1.0, 1.0, 0.05});
        Eigen::VectorXd dir = Eigen::VectorXd::Ones(d).normalized();
        const auto mu = DiscreteMeasure::dirac(Eigen::VectorXd::Zero(d));
        for (int k = 0; k <= 800; ++k) {
            const Eigen::VectorXd z = (0.01 * k) * dir;
            worst_norm = std::max(worst_norm, mt::operator_norm(f.intrinsic_hess(mu, z, Eigen::VectorXd::Zero(d))));
        }
    }
    ok = ok && worst_norm <= ex.Mmm + 1e-12;

    ExperimentConfig cfg;
    cfg.energy.type = "kernel";
    cfg.energy.L = 1.0;
    cfg.energy.alpha = 0.05;
    cfg.system.N = 8;
    cfg.from_file = true;
    cfg.sim.step = 0.05;
    cfg.sim.burn_in = 500;
    cfg.sim.thin = 100;
    cfg.sim.seed = 61;
    cfg.analysis.tolerance = 0.0;
    const auto rep = verify_conditional(cfg, 50);
    ok = ok && rep.pass();
    std::ostringstream os;
    os << "M=" << ex.Mmm << " rho=" << ex.rho << " beta_max=" << ex.beta_max << " max|D2F|=" << worst_norm
       << " min gap=" << rep.rows[0].value;
    return {ok, os.str()};
}

Outcome derivative_ladder() {
    int failures = 0, checks = 0;
    for (int kind = 0; kind < 3; ++kind) {
        std::mt19937_64 gen(700 + kind);
        for (int rep = 0; rep < 100; ++rep) {
            const int d = 1 + rep % 2;
            const auto energy = mt::random_energy(gen, kind, d);
            const auto mu = mt::random_measure(gen, 2 + rep % 4, d);
            const Eigen::VectorXd x = mt::random_point(gen, d);

            const double flat = energy->flat_derivative(mu, x) -
                                mu.integrate([&](const auto& y) { return energy->flat_derivative(mu, y); });
            failures += std::abs(mt::fd_flat_derivative(*energy, mu, x) - flat) > 1e-6 * std::max(1.0, std::abs(flat));

            const Eigen::VectorXd g = energy->intrinsic_grad(mu, x);
            const Eigen::VectorXd fd =
                mt::central_gradient([&](const Eigen::VectorXd& y) { return energy->flat_derivative(mu, y); }, x, 1e-5);
            failures += (g - fd).norm() > 1e-6 * std::max(1.0, g.norm());

            const int n = 1 + rep % 5;
            const ParticleSystem sys(energy, n, d);
            const Configuration c = mt::random_config(gen, n, d);
            const Eigen::VectorXd grad = flatten(sys.gradient(c));
            const Eigen::VectorXd fgrad = mt::central_gradient(
                [&](const Eigen::VectorXd& y) { return sys.potential(unflatten(y, n, d)); }, flatten(c), 1e-5);
            failures += (grad - fgrad).norm() > 1e-5 * std::max(1.0, grad.norm());

            const Eigen::MatrixXd h = sys.hessian(c);
            const Eigen::MatrixXd fh = mt::central_jacobian(
                [&](const Eigen::VectorXd& y) { return Eigen::VectorXd(flatten(sys.gradient(unflatten(y, n, d)))); },
                flatten(c), 1e-4);
            failures += (h - fh).cwiseAbs().maxCoeff() > 1e-4 * std::max(1.0, h.cwiseAbs().maxCoeff());
            checks += 4;
        }
    }
    return {failures == 0, std::to_string(checks - failures) + "/" + std::to_string(checks) + " checks over 300 instances"};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 sharpness battery", sharpness},
        {"2 conditional gap", conditional},
        {"3 curvature equality", curvature},
        {"4 hessian block bound", hessian},
        {"5 constants algebra", constants_algebra},
        {"6 soundness vs exact gaussian lsi", soundness},
        {"7 entropy decay", entropy},
        {"8 sampler correctness", samplers},
        {"9 kernel example constants", kernel},
        {"10 derivative ladder", derivative_ladder},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("%s  %-36s %6.2fs  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
