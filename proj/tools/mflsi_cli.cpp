#include <cmath>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "mflsi/config.hpp"
#include "mflsi/io.hpp"
#include "mflsi/verify.hpp"

using json = nlohmann::ordered_json;
using namespace mflsi;

namespace {

enum Exit { kPass = 0, kVerifyFail = 1, kConfigError = 2, kInapplicable = 3, kBlowUp = 4 };

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::BlowUp: return kBlowUp;
    case ErrorKind::GibbsUndefined:
    case ErrorKind::DefectiveInvalid:
    case ErrorKind::CorollaryInvalid:
    case ErrorKind::UnsupportedTransport: return kInapplicable;
    case ErrorKind::WindowTooSmall: return kVerifyFail;
    default: return kConfigError;
    }
}

json number(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return nullptr;
    return v > 0 ? "inf" : "-inf";
}

json config_json(const ExperimentConfig& c) {
    const auto& e = c.energy;
    json energy{{"type", e.type}, {"a", e.a}, {"eta", e.eta}, {"v1_sup", e.v1_sup}, {"v1_freq", e.v1_freq},
                {"L", e.L},       {"alpha", e.alpha}, {"features", e.features}, {"outer_coef", e.outer_coef.value_or(-e.a)}};
    const auto& s = c.sim;
    json sim{{"step", s.step ? json(*s.step) : json("auto")},
             {"n_steps", s.n_steps},
             {"burn_in", s.burn_in},
             {"thin", s.thin},
             {"replicas", s.replicas},
             {"seed", s.seed},
             {"sampler", s.sampler == Sampler::MALA ? "MALA" : "ULA"},
             {"initial", s.initial},
             {"initial_scale", s.initial_scale},
             {"initial_values", s.initial_values},
             {"observables", s.observables}};
    const auto& a = c.analysis;
    json analysis{{"epsilon", a.epsilon},
                  {"grid_lo", a.grid_lo ? json(*a.grid_lo) : json("auto")},
                  {"grid_hi", a.grid_hi ? json(*a.grid_hi) : json("auto")},
                  {"grid_n", a.grid_n},
                  {"quantities", a.quantities},
                  {"method", a.method},
                  {"observable", a.observable},
                  {"horizon", a.horizon},
                  {"max_lag", a.max_lag},
                  {"lambda", a.lambda ? json(*a.lambda) : json(nullptr)},
                  {"rho_N", a.rho_N ? json(*a.rho_N) : json(nullptr)},
                  {"tolerance", a.tolerance}};
    return json{{"energy", energy},
                {"system", {{"N", c.system.N}, {"d", c.system.d}}},
                {"sim", sim},
                {"analysis", analysis},
                {"output", {{"path", c.output.path}, {"trajectory", c.output.trajectory}}}};
}

json provenance(const ExperimentConfig& c) {
    return json{{"version", kVersion}, {"seed", c.sim.seed}, {"config", config_json(c)}};
}

void emit(const ExperimentConfig& c, const std::string& content) {
    if (c.output.path.empty()) std::cout << content;
    else write_atomic(c.output.path, content);
}

json report_json(const ConstantsReport& r) {
    json out{{"poincare_bound", number(r.poincare_bound)},
             {"N0", number(r.N0)},
             {"lambda_tilde", number(r.lambda_tilde)},
             {"beta_N", number(r.beta_N)},
             {"delta_N", number(r.delta_N)},
             {"rho_prime_star", number(r.rho_prime_star)},
             {"rho_star", r.rho_star ? json(*r.rho_star) : json(nullptr)}};
    out["flags"] = {{"poincare_positive", r.flags.poincare_positive},
                    {"cost_condition", r.flags.cost_condition},
                    {"n_above_n0", r.flags.n_above_n0},
                    {"beta_in_unit", r.flags.beta_in_unit},
                    {"defective_valid", r.flags.defective_valid},
                    {"corollary_valid", r.flags.corollary_valid}};
    return out;
}

int cmd_constants(const ExperimentConfig& cfg) {
    const auto c = constants_for(cfg);
    json out = report_json(c.report);
    if (c.kernel) {
        out["rho"] = c.kernel->rho;
        out["condition_holds"] = c.kernel->condition_holds;
        out["beta_max"] = number(c.kernel->beta_max);
        out["Mmm"] = c.kernel->Mmm;
    }
    const auto& p = c.poincare_inputs;
    const auto& l = c.lsi_inputs;
    out["inputs"] = {{"rho_N", p.rho_N}, {"lambda", p.lambda},        {"Mmm", p.Mmm},     {"N", p.N},
                     {"rho", l.rho},     {"lambda_prime", l.lambda_prime}, {"alpha_N", l.alpha_N}, {"epsilon", l.epsilon},
                     {"d", l.d},         {"var_phi", c.var_phi},       {"var_source", c.var_source}};
    out["provenance"] = provenance(cfg);
    emit(cfg, out.dump(2) + "\n");
    if (!c.applicable())
        std::cerr << "theorem inapplicable: poincare_positive=" << c.report.flags.poincare_positive
                  << " defective_valid=" << c.report.flags.defective_valid << "\n";
    return c.applicable() ? kPass : kInapplicable;
}

int cmd_verify(const ExperimentConfig& cfg, const std::string& suite) {
    const auto rep = run_suite(suite, cfg);
    std::cout << "suite " << rep.suite << "\n";
    json rows = json::array();
    for (const auto& r : rep.rows) {
        std::cout << (r.pass ? "PASS  " : "FAIL  ") << std::left << std::setw(72) << r.check << std::right
                  << std::setw(14) << std::setprecision(6) << r.value << "  " << r.relation << "\n";
        rows.push_back({{"check", r.check}, {"value", number(r.value)}, {"relation", r.relation}, {"pass", r.pass}});
    }
    std::cout << (rep.pass() ? "PASS" : "FAIL") << " " << rep.suite << "\n";
    if (!rep.pass())
        for (const auto& r : rep.rows)
            if (!r.pass) std::cerr << "failing invariant: " << r.check << " = " << r.value << " (" << r.relation << ")\n";
    if (!cfg.output.path.empty()) {
        json out{{"suite", rep.suite}, {"pass", rep.pass()}, {"rows", rows}, {"provenance", provenance(cfg)}};
        write_atomic(cfg.output.path, out.dump(2) + "\n");
    }
    return rep.pass() ? kPass : kVerifyFail;
}

int cmd_simulate(const ExperimentConfig& cfg) {
    const auto system = make_system(cfg);
    const auto sim = make_sim_config(cfg, system);
    const auto obs = make_observables(cfg.sim.observables, system);
    const auto traj = run_chain(system, sim, obs);
    std::ostringstream csv;
    write_trajectory_csv(csv, traj);
    json meta = provenance(cfg);
    meta["step"] = sim.step;
    json acc = json::array();
    for (const auto& r : traj.replicas) acc.push_back(r.acceptance_rate());
    meta["acceptance_rate"] = acc;
    if (cfg.output.path.empty()) {
        std::cout << csv.str();
    } else {
        write_atomic(cfg.output.path, csv.str());
        write_atomic(cfg.output.path + ".meta.json", meta.dump(2) + "\n");
    }
    return kPass;
}

json gap_json(const GapEstimate& e) {
    return json{{"quantity", "gap"},
                {"rate", number(e.rate)},
                {"stderr", number(e.std_error)},
                {"method", to_string(e.method)},
                {"flags",
                 {{"success", e.success},
                  {"no_correlation", e.no_correlation},
                  {"low_confidence", e.low_confidence},
                  {"zero_variance", e.zero_variance}}},
                {"effective_samples", number(e.effective_samples)}};
}

json variance_json(const Eigen::VectorXd& series) {
    // Standard error from the spread of 20 batch variances.
    const double m = series.mean();
    const double var = (series.array() - m).square().sum() / std::max<Eigen::Index>(1, series.size() - 1);
    const int batches = 20;
    const Eigen::Index len = series.size() / batches;
    double se = std::numeric_limits<double>::quiet_NaN();
    if (len >= 2) {
        std::vector<double> bv;
        for (int b = 0; b < batches; ++b) {
            const Eigen::VectorXd seg = series.segment(b * len, len);
            bv.push_back((seg.array() - seg.mean()).square().sum() / static_cast<double>(len - 1));
        }
        se = detail::sample_sd(bv) / std::sqrt(static_cast<double>(batches));
    }
    return json{{"quantity", "variance"}, {"value", var}, {"stderr", number(se)}, {"method", "batch-means"}};
}

int cmd_estimate(const ExperimentConfig& cfg) {
    Trajectory traj;
    std::string source;
    if (!cfg.output.trajectory.empty()) {
        traj = load_trajectory_csv(cfg.output.trajectory);
        source = cfg.output.trajectory;
    } else {
        const auto system = make_system(cfg);
        traj = run_chain(system, make_sim_config(cfg, system), make_observables({cfg.analysis.observable}, system));
        source = "simulated";
    }
    std::size_t k = traj.observables.size();
    for (std::size_t i = 0; i < traj.observables.size(); ++i)
        if (traj.observables[i] == cfg.analysis.observable) k = i;
    require(k < traj.observables.size(), ErrorKind::Config, "observable " + cfg.analysis.observable + " not in trajectory");
    const double dt = traj.step * static_cast<double>(traj.replicas.front().steps.size() > 1
                                                          ? traj.replicas.front().steps[1] - traj.replicas.front().steps[0]
                                                          : 1);
    json estimates = json::array();
    for (const auto& q : cfg.analysis.quantities) {
        if (q == "gap") {
            GapEstimate e = cfg.analysis.method == "variance-decay"
                                ? estimate_gap_variance_decay(traj, k)
                                : estimate_gap_autocorr(traj.series(0, k), dt, cfg.analysis.max_lag);
            estimates.push_back(gap_json(e));
        } else {
            estimates.push_back(variance_json(traj.series(0, k)));
        }
    }
    json out{{"observable", cfg.analysis.observable}, {"source", source}, {"estimates", estimates},
             {"provenance", provenance(cfg)}};
    emit(cfg, out.dump(2) + "\n");
    return kPass;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean-field functional inequalities: constants, verification batteries, Langevin sampling."};
    app.set_version_flag("--version", std::string(kVersion));
    std::string config_path, out_path, trajectory_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> replicas;
    app.add_option("--config", config_path, "experiment config (key = value sections)");
    app.add_option("--out", out_path, "output path (stdout when omitted)");
    app.add_option("--seed", seed, "override sim.seed");
    app.add_option("--replicas", replicas, "override sim.replicas");
    app.require_subcommand(1);

    auto* constants = app.add_subcommand("constants", "theorem constants report (JSON)");
    auto* verify = app.add_subcommand("verify", "run a verification battery");
    std::string suite;
    verify->add_option("suite", suite, "sharpness | curvature | hessian | conditional | entropy")
        ->required()
        ->check(CLI::IsMember({"sharpness", "curvature", "hessian", "conditional", "entropy"}));
    auto* simulate = app.add_subcommand("simulate", "run Langevin chains and write a trajectory CSV");
    auto* estimate = app.add_subcommand("estimate", "gap / variance estimates (JSON)");
    estimate->add_option("--trajectory", trajectory_path, "trajectory CSV to analyse (simulates when omitted)");
    for (auto* sub : {constants, verify, simulate, estimate}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfigError;
    }

    try {
        ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
        if (seed) cfg.sim.seed = *seed;
        if (replicas) cfg.sim.replicas = *replicas;
        if (!out_path.empty()) cfg.output.path = out_path;
        if (!trajectory_path.empty()) cfg.output.trajectory = trajectory_path;
        validate(cfg);
        if (*constants) return cmd_constants(cfg);
        if (*verify) return cmd_verify(cfg, suite);
        if (*simulate) return cmd_simulate(cfg);
        return cmd_estimate(cfg);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigError;
    }
}
