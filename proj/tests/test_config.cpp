#include <sstream>

#include <gtest/gtest.h>

#include "mflsi/config.hpp"
#include "mflsi/io.hpp"
#include "mflsi/verify.hpp"

using namespace mflsi;

namespace {

ErrorKind kind_of(const std::string& text) {
    try {
        parse_config_string(text);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::InvalidArgument;
}

} // namespace

TEST(Config, ParsesSections) {
    const auto c = parse_config_string(R"(
# comment
[energy]
type = kernel
L = 1
alpha = 0.05
[system]
N = 8
d = 1
[sim]
step = 0.02
sampler = ULA
seed = 77
observables = mean, U, x[0][0]
[analysis]
epsilon = 0.25
grid_lo = -6
grid_hi = 6
)");
    EXPECT_EQ(c.energy.type, "kernel");
    EXPECT_DOUBLE_EQ(c.energy.alpha, 0.05);
    EXPECT_EQ(c.system.N, 8);
    EXPECT_EQ(c.sim.sampler, Sampler::ULA);
    EXPECT_EQ(c.sim.seed, 77u);
    ASSERT_EQ(c.sim.observables.size(), 3u);
    EXPECT_EQ(c.sim.observables[2], "x[0][0]");
    EXPECT_DOUBLE_EQ(*c.analysis.grid_hi, 6.0);
    EXPECT_TRUE(c.from_file);
    const auto sys = make_system(c);
    EXPECT_EQ(make_observables(c.sim.observables, sys).size(), 3u);
    EXPECT_DOUBLE_EQ(make_sim_config(c, sys).step, 0.02);
}

TEST(Config, RejectsUnknownKeysAndSections) {
    EXPECT_EQ(kind_of("[energy]\ntypo = 1\n"), ErrorKind::Config);
    EXPECT_EQ(kind_of("[nonsense]\na = 1\n"), ErrorKind::Config);
    EXPECT_EQ(kind_of("a = 1\n"), ErrorKind::Config);
    EXPECT_EQ(kind_of("[energy]\na = x\n"), ErrorKind::Config);
    EXPECT_EQ(kind_of("[energy]\na = 1\na = 2\n"), ErrorKind::Config);
    EXPECT_EQ(kind_of("[analysis]\nepsilon = 1.5\n"), ErrorKind::Config);
    EXPECT_EQ(kind_of("[sim]\nsampler = HMC\n"), ErrorKind::Config);
    EXPECT_EQ(kind_of("[sim]\ninitial = explicit\ninitial_values = 1, 2\n"), ErrorKind::Config);
}

TEST(Config, RenderRoundTrips) {
    ExperimentConfig c;
    c.energy.type = "parametrized";
    c.energy.features = "tanh";
    c.sim.step = 0.01;
    c.analysis.lambda = 0.3;
    const auto back = parse_config_string(render_config(c));
    EXPECT_EQ(render_config(back), render_config(c));
}

TEST(Config, ExplicitInitialCondition) {
    const auto c = parse_config_string("[system]\nN = 2\nd = 1\n[sim]\ninitial = explicit\ninitial_values = 1.5, -2\n");
    const auto sys = make_system(c);
    const auto s = make_sim_config(c, sys);
    ASSERT_EQ(s.initial.kind, InitialCondition::Kind::Explicit);
    EXPECT_DOUBLE_EQ(s.initial.explicit_config(1, 0), -2.0);
}

TEST(Config, UnknownObservable) {
    ExperimentConfig c;
    const auto sys = make_system(c);
    EXPECT_THROW(make_observables({"x[99][0]"}, sys), Error);
    EXPECT_THROW(make_observables({"entropy"}, sys), Error);
}

TEST(Constants, QuadraticExampleFromConfig) {
    ExperimentConfig c;  // quadratic a = 0.5, N = 20
    const auto out = constants_for(c);
    EXPECT_NEAR(out.report.poincare_bound, 0.45, 1e-12);
    EXPECT_NEAR(out.var_phi, 1.0, 1e-6);
    EXPECT_FALSE(out.applicable());  // 4 lambda' = 1.5 > rho = 1
}

TEST(Constants, KernelExampleFromConfig) {
    ExperimentConfig c;
    c.energy.type = "kernel";
    const auto out = constants_for(c);
    ASSERT_TRUE(out.kernel.has_value());
    EXPECT_NEAR(out.kernel->rho, 0.36787944117144233, 1e-12);
    EXPECT_TRUE(out.kernel->condition_holds);
    EXPECT_NEAR(out.kernel->beta_max, 1.6094379124341003, 1e-12);
    c.energy.alpha = 0.2;
    EXPECT_FALSE(constants_for(c).report.flags.corollary_valid);
}

TEST(Constants, ParametrizedIdentityMatchesQuadratic) {
    // Identity features with the |x|^2/2 base reproduce the quadratic example.
    ExperimentConfig q;
    q.energy.a = 0.2;
    ExperimentConfig p = q;
    p.energy.type = "parametrized";
    p.energy.L = 0.0;
    const auto a = constants_for(q), b = constants_for(p);
    EXPECT_NEAR(a.report.poincare_bound, b.report.poincare_bound, 1e-12);
    ASSERT_TRUE(a.report.rho_star && b.report.rho_star);
    EXPECT_NEAR(*a.report.rho_star, *b.report.rho_star, 1e-6);
}

TEST(Io, TrajectoryCsvRoundTrip) {
    const ParticleSystem sys(std::make_shared<QuadraticMeanEnergy>(0.3), 3, 1);
    SimConfig cfg;
    cfg.n_steps = 50;
    cfg.step = 0.1;
    cfg.thin = 5;
    cfg.replicas = 2;
    const auto traj = run_chain(sys, cfg, {observables::mean(), observables::particle(1)});
    std::stringstream ss;
    write_trajectory_csv(ss, traj);
    const auto back = read_trajectory_csv(ss);
    ASSERT_EQ(back.replicas.size(), 2u);
    EXPECT_DOUBLE_EQ(back.step, 0.1);
    EXPECT_EQ(back.observables, traj.observables);
    EXPECT_EQ(back.replicas[1].steps, traj.replicas[1].steps);
    EXPECT_LT((back.replicas[1].values - traj.replicas[1].values).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Io, EmptyTrajectoryIsConfigError) {
    std::stringstream header("replica,step,time,observable,value\n");
    try {
        read_trajectory_csv(header);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Config);
    }
    std::stringstream nothing("");
    EXPECT_THROW(read_trajectory_csv(nothing), Error);
}

TEST(Verify, CurvatureFailsWithUnderstatedLambda) {
    ExperimentConfig c;
    c.from_file = true;
    c.analysis.lambda = 0.1;
    const auto rep = verify_curvature(c, 50);
    EXPECT_FALSE(rep.pass());
    c.analysis.lambda.reset();
    EXPECT_TRUE(verify_curvature(c, 50).pass());
}

TEST(Verify, SharpnessAndHessianPassOnDefaults) {
    const ExperimentConfig c;
    EXPECT_TRUE(verify_sharpness(c).pass());
    EXPECT_TRUE(verify_hessian(c, 10).pass());
}
