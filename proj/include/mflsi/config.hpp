#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mflsi/dynamics.hpp"
#include "mflsi/energies.hpp"
#include "mflsi/error.hpp"
#include "mflsi/estimators.hpp"

namespace mflsi {

struct EnergyConfig {
    std::string type = "quadratic";  // quadratic | kernel | parametrized
    double a = 0.5;
    double eta = 1.0;
    double v1_sup = 0.0;
    double v1_freq = 1.0;
    double L = 1.0;
    double alpha = 0.05;
    std::string features = "identity";  // identity | tanh
    std::optional<double> outer_coef;   // defaults to -a
};

struct SystemConfig {
    int N = 20;
    int d = 1;
};

struct SimSection {
    std::optional<double> step;  // unset: default_step(system)
    std::int64_t n_steps = 100000;
    std::int64_t burn_in = 1000;
    std::int64_t thin = 1;
    int replicas = 1;
    std::uint64_t seed = 0;
    Sampler sampler = Sampler::MALA;
    std::string initial = "zeros";  // zeros | gaussian | explicit
    double initial_scale = 1.0;
    std::vector<double> initial_values;
    std::vector<std::string> observables{"mean"};
};

struct AnalysisConfig {
    double epsilon = 0.5;
    std::optional<double> grid_lo;
    std::optional<double> grid_hi;
    int grid_n = 2001;
    std::vector<std::string> quantities{"gap"};
    std::string method = "autocorr-fit";
    std::string observable = "mean";
    double horizon = 10.0;
    int max_lag = 5000;
    std::optional<double> lambda;  // overrides the declared semi-convexity modulus
    std::optional<double> rho_N;   // claimed conditional Poincaré constant
    double tolerance = 1e-3;
};

struct OutputConfig {
    std::string path;
    std::string trajectory;
};

struct ExperimentConfig {
    EnergyConfig energy;
    SystemConfig system;
    SimSection sim;
    AnalysisConfig analysis;
    OutputConfig output;
    bool from_file = false;
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> schema{
        {"energy", {"type", "a", "eta", "v1_sup", "v1_freq", "L", "alpha", "features", "outer_coef"}},
        {"system", {"N", "d"}},
        {"sim",
         {"step", "n_steps", "burn_in", "thin", "replicas", "seed", "sampler", "initial", "initial_scale",
          "initial_values", "observables"}},
        {"analysis",
         {"epsilon", "grid_lo", "grid_hi", "grid_n", "quantities", "method", "observable", "horizon", "max_lag",
          "lambda", "rho_N", "tolerance"}},
        {"output", {"path", "trajectory"}},
    };
    return schema;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T>
T parse_value(const std::string& key, const std::string& raw) {
    std::istringstream is(trim(raw));
    T v{};
    is >> v;
    if (is.fail() || !is.eof()) throw Error(ErrorKind::Config, "cannot parse '" + raw + "' for key " + key);
    return v;
}

} // namespace detail

inline void validate(const ExperimentConfig& c) {
    auto check = [](bool ok, const std::string& msg) { require(ok, ErrorKind::Config, msg); };
    const auto& e = c.energy;
    check(e.type == "quadratic" || e.type == "kernel" || e.type == "parametrized",
          "energy.type must be quadratic, kernel or parametrized");
    check(e.a >= 0.0, "energy.a must be >= 0");
    check(e.eta > 0.0 && e.v1_sup >= 0.0 && e.L >= 0.0 && e.alpha >= 0.0, "kernel parameters out of range");
    check(e.features == "identity" || e.features == "tanh", "energy.features must be identity or tanh");
    check(c.system.N >= 1 && c.system.d >= 1, "system.N and system.d must be positive");
    const auto& s = c.sim;
    check(!s.step || *s.step > 0.0, "sim.step must be > 0");
    check(s.n_steps >= 1 && s.burn_in >= 0 && s.burn_in < s.n_steps && s.thin >= 1 && s.replicas >= 1,
          "sim counts out of range");
    check(s.initial == "zeros" || s.initial == "gaussian" || s.initial == "explicit",
          "sim.initial must be zeros, gaussian or explicit");
    check(s.initial != "explicit" ||
              static_cast<int>(s.initial_values.size()) == c.system.N * c.system.d,
          "sim.initial_values must hold N*d numbers");
    check(!s.observables.empty(), "sim.observables is empty");
    const auto& a = c.analysis;
    check(a.epsilon > 0.0 && a.epsilon < 1.0, "analysis.epsilon must lie in (0,1)");
    check(a.grid_n >= 3, "analysis.grid_n must be >= 3");
    check(!a.grid_lo.has_value() == !a.grid_hi.has_value(), "set both analysis.grid_lo and grid_hi or neither");
    check(!a.grid_lo || *a.grid_lo < *a.grid_hi, "analysis.grid_lo must be < grid_hi");
    check(a.method == "autocorr-fit" || a.method == "variance-decay", "analysis.method unknown");
    for (const auto& q : a.quantities) check(q == "gap" || q == "variance", "unknown quantity " + q);
    check(a.horizon > 0.0 && a.max_lag >= 1 && a.tolerance >= 0.0, "analysis numbers out of range");
}

inline ExperimentConfig parse_config(std::istream& is) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw Error(ErrorKind::Config, e.what());
    }
    const auto& schema = detail::config_schema();
    ExperimentConfig c;
    c.from_file = true;
    for (const auto& [section, body] : tree) {
        const auto it = schema.find(section);
        require(body.data().empty(), ErrorKind::Config, "key " + section + " outside any section");
        require(it != schema.end(), ErrorKind::Config, "unknown section [" + section + "]");
        for (const auto& [key, node] : body) {
            require(it->second.count(key) > 0, ErrorKind::Config, "unknown key " + section + "." + key);
            const std::string raw = detail::trim(node.data());
            const std::string full = section + "." + key;
            auto num = [&] { return detail::parse_value<double>(full, raw); };
            auto integer = [&] { return detail::parse_value<std::int64_t>(full, raw); };
            if (section == "energy") {
                auto& e = c.energy;
                if (key == "type") e.type = raw;
                else if (key == "a") e.a = num();
                else if (key == "eta") e.eta = num();
                else if (key == "v1_sup") e.v1_sup = num();
                else if (key == "v1_freq") e.v1_freq = num();
                else if (key == "L") e.L = num();
                else if (key == "alpha") e.alpha = num();
                else if (key == "features") e.features = raw;
                else if (key == "outer_coef") e.outer_coef = num();
            } else if (section == "system") {
                if (key == "N") c.system.N = static_cast<int>(integer());
                else c.system.d = static_cast<int>(integer());
            } else if (section == "sim") {
                auto& s = c.sim;
                if (key == "step") s.step = num();
                else if (key == "n_steps") s.n_steps = integer();
                else if (key == "burn_in") s.burn_in = integer();
                else if (key == "thin") s.thin = integer();
                else if (key == "replicas") s.replicas = static_cast<int>(integer());
                else if (key == "seed") s.seed = detail::parse_value<std::uint64_t>(full, raw);
                else if (key == "sampler") {
                    require(raw == "ULA" || raw == "MALA", ErrorKind::Config, "sim.sampler must be ULA or MALA");
                    s.sampler = raw == "ULA" ? Sampler::ULA : Sampler::MALA;
                } else if (key == "initial") s.initial = raw;
                else if (key == "initial_scale") s.initial_scale = num();
                else if (key == "initial_values") {
                    s.initial_values.clear();
                    for (const auto& v : detail::split_list(raw)) s.initial_values.push_back(detail::parse_value<double>(full, v));
                } else if (key == "observables") s.observables = detail::split_list(raw);
            } else if (section == "analysis") {
                auto& a = c.analysis;
                if (key == "epsilon") a.epsilon = num();
                else if (key == "grid_lo") a.grid_lo = num();
                else if (key == "grid_hi") a.grid_hi = num();
                else if (key == "grid_n") a.grid_n = static_cast<int>(integer());
                else if (key == "quantities") a.quantities = detail::split_list(raw);
                else if (key == "method") a.method = raw;
                else if (key == "observable") a.observable = raw;
                else if (key == "horizon") a.horizon = num();
                else if (key == "max_lag") a.max_lag = static_cast<int>(integer());
                else if (key == "lambda") a.lambda = num();
                else if (key == "rho_N") a.rho_N = num();
                else if (key == "tolerance") a.tolerance = num();
            } else {
                if (key == "path") c.output.path = raw;
                else c.output.trajectory = raw;
            }
        }
    }
    validate(c);
    return c;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::Config, "cannot open config " + path);
    return parse_config(in);
}

/// Canonical key = value rendering of every resolved field.
inline std::string render_config(const ExperimentConfig& c) {
    std::ostringstream os;
    os.precision(17);
    auto list = [](const auto& v) {
        std::ostringstream s;
        s.precision(17);
        for (std::size_t i = 0; i < v.size(); ++i) s << (i ? ", " : "") << v[i];
        return s.str();
    };
    const auto& e = c.energy;
    os << "[energy]\ntype = " << e.type << "\na = " << e.a << "\neta = " << e.eta << "\nv1_sup = " << e.v1_sup
       << "\nv1_freq = " << e.v1_freq << "\nL = " << e.L << "\nalpha = " << e.alpha << "\nfeatures = " << e.features
       << "\nouter_coef = " << e.outer_coef.value_or(-e.a) << "\n\n";
    os << "[system]\nN = " << c.system.N << "\nd = " << c.system.d << "\n\n";
    const auto& s = c.sim;
    os << "[sim]\n";
    if (s.step) os << "step = " << *s.step << "\n";
    os << "n_steps = " << s.n_steps << "\nburn_in = " << s.burn_in << "\nthin = " << s.thin
       << "\nreplicas = " << s.replicas << "\nseed = " << s.seed
       << "\nsampler = " << (s.sampler == Sampler::MALA ? "MALA" : "ULA") << "\ninitial = " << s.initial
       << "\ninitial_scale = " << s.initial_scale << "\n";
    if (!s.initial_values.empty()) os << "initial_values = " << list(s.initial_values) << "\n";
    os << "observables = " << list(s.observables) << "\n\n";
    const auto& a = c.analysis;
    os << "[analysis]\nepsilon = " << a.epsilon << "\n";
    if (a.grid_lo) os << "grid_lo = " << *a.grid_lo << "\ngrid_hi = " << *a.grid_hi << "\n";
    os << "grid_n = " << a.grid_n << "\nquantities = " << list(a.quantities) << "\nmethod = " << a.method
       << "\nobservable = " << a.observable << "\nhorizon = " << a.horizon << "\nmax_lag = " << a.max_lag << "\n";
    if (a.lambda) os << "lambda = " << *a.lambda << "\n";
    if (a.rho_N) os << "rho_N = " << *a.rho_N << "\n";
    os << "tolerance = " << a.tolerance << "\n\n";
    os << "[output]\npath = " << c.output.path << "\ntrajectory = " << c.output.trajectory << "\n";
    return os.str();
}

inline KernelParams kernel_params(const EnergyConfig& e) { return {e.eta, e.v1_sup, e.v1_freq, e.L, e.alpha}; }

/// Energy described by the [energy] section on R^d.
inline EnergyPtr make_energy(const EnergyConfig& e, int d) {
    try {
        if (e.type == "quadratic") return std::make_shared<QuadraticMeanEnergy>(e.a);
        if (e.type == "kernel") return std::make_shared<PairwiseKernelEnergy>(kernel_params(e));
        KernelParams base = kernel_params(e);
        base.alpha = 0.0;
        auto phi = e.features == "tanh" ? FeatureMap::tanh(d) : FeatureMap::identity(d);
        return std::make_shared<ParametrizedEnergy>(std::make_shared<PairwiseKernelEnergy>(base), std::move(phi),
                                                    OuterFunction::quadratic(e.outer_coef.value_or(-e.a)));
    } catch (const Error& err) {
        throw Error(ErrorKind::Config, err.what());
    }
}

inline ParticleSystem make_system(const ExperimentConfig& c) {
    return ParticleSystem(make_energy(c.energy, c.system.d), c.system.N, c.system.d);
}

inline SimConfig make_sim_config(const ExperimentConfig& c, const ParticleSystem& system) {
    SimConfig s;
    s.step = c.sim.step.value_or(default_step(system));
    s.n_steps = c.sim.n_steps;
    s.burn_in = c.sim.burn_in;
    s.thin = c.sim.thin;
    s.replicas = c.sim.replicas;
    s.seed = c.sim.seed;
    s.sampler = c.sim.sampler;
    if (c.sim.initial == "gaussian") s.initial = InitialCondition::gaussian(c.sim.initial_scale);
    else if (c.sim.initial == "explicit") {
        Configuration x(c.system.N, c.system.d);
        for (int i = 0; i < c.system.N; ++i)
            for (int k = 0; k < c.system.d; ++k)
                x(i, k) = c.sim.initial_values[static_cast<std::size_t>(i * c.system.d + k)];
        s.initial = InitialCondition::from(std::move(x));
    }
    return s;
}

/// Observable by name: mean, mean[k], U, x[i][k], or `coordinates` (expands to all).
inline std::vector<Observable> make_observables(const std::vector<std::string>& names, const ParticleSystem& system) {
    std::vector<Observable> out;
    for (const auto& n : names) {
        if (n == "mean") out.push_back(observables::mean());
        else if (n == "U") out.push_back(observables::potential(system));
        else if (n == "coordinates") {
            for (auto& o : observables::coordinates(system.n(), system.d())) out.push_back(std::move(o));
        } else {
            int i = 0, k = 0;
            char tail = 0;
            if (std::sscanf(n.c_str(), "mean[%d]%c", &k, &tail) == 1 && k >= 0 && k < system.d()) {
                out.push_back(observables::mean(k));
            } else if (std::sscanf(n.c_str(), "x[%d][%d]%c", &i, &k, &tail) == 2 && i >= 0 && i < system.n() &&
                       k >= 0 && k < system.d()) {
                out.push_back(observables::particle(i, k));
            } else {
                throw Error(ErrorKind::Config, "unknown observable " + n);
            }
        }
    }
    return out;
}

} // namespace mflsi
