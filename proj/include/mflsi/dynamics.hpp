#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mflsi/energies.hpp"
#include "mflsi/error.hpp"
#include "mflsi/rng.hpp"

namespace mflsi {

enum class Sampler { ULA, MALA };

struct InitialCondition {
    enum class Kind { Zeros, Gaussian, Explicit };
    Kind kind = Kind::Zeros;
    double scale = 1.0;
    Configuration explicit_config;

    static InitialCondition zeros() { return {}; }
    static InitialCondition gaussian(double scale) { return {Kind::Gaussian, scale, {}}; }
    static InitialCondition from(Configuration x) { return {Kind::Explicit, 0.0, std::move(x)}; }
};

struct SimConfig {
    double step = 0.01;
    std::int64_t n_steps = 1000;
    std::int64_t burn_in = 0;
    std::int64_t thin = 1;
    int replicas = 1;
    std::uint64_t seed = 0;
    Sampler sampler = Sampler::ULA;
    InitialCondition initial;

    void validate() const {
        require(step > 0.0 && std::isfinite(step), ErrorKind::InvalidArgument, "step must be > 0");
        require(n_steps >= 1, ErrorKind::InvalidArgument, "n_steps must be >= 1");
        require(burn_in >= 0 && burn_in < n_steps, ErrorKind::InvalidArgument, "need 0 <= burn_in < n_steps");
        require(thin >= 1, ErrorKind::InvalidArgument, "thin must be >= 1");
        require(replicas >= 1, ErrorKind::InvalidArgument, "replicas must be >= 1");
    }
};

inline constexpr double kBlowUpThreshold = 1e8;

struct ChainState {
    Configuration configuration;
    std::int64_t step_index = 0;
    std::int64_t acceptance_count = 0;
    /// Noise-stream id of each particle; identity unless relabelled.
    std::vector<std::uint32_t> labels;

    // MALA caches for the current configuration.
    std::optional<double> potential;
    std::optional<Configuration> gradient;

    static ChainState start(Configuration x) {
        ChainState s;
        s.labels.resize(static_cast<std::size_t>(x.rows()));
        std::iota(s.labels.begin(), s.labels.end(), 0u);
        s.configuration = std::move(x);
        return s;
    }
};

namespace detail {

inline Configuration draw_noise(const StreamRng& rng, const ChainState& state, int d,
                                StreamRng::Tag tag = StreamRng::kProposal) {
    const auto n = state.configuration.rows();
    const std::uint32_t pairs = static_cast<std::uint32_t>((d + 1) / 2);
    Configuration xi(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const std::uint32_t label = state.labels[static_cast<std::size_t>(i)];
        for (int k = 0; k < d; k += 2) {
            const auto z = rng.normal_pair(static_cast<std::uint64_t>(state.step_index),
                                           label * pairs + static_cast<std::uint32_t>(k / 2), tag);
            xi(i, k) = z[0];
            if (k + 1 < d) xi(i, k + 1) = z[1];
        }
    }
    return xi;
}

inline void check_finite(const Configuration& x, const Configuration& grad, std::int64_t step, std::uint32_t replica) {
    if (!grad.allFinite() || !x.allFinite() || x.cwiseAbs().maxCoeff() > kBlowUpThreshold)
        throw Error(ErrorKind::BlowUp,
                    "replica " + std::to_string(replica) + " diverged at step " + std::to_string(step));
}

} // namespace detail

/// Deterministic part of an Euler step: x - h grad U_N(x).
inline Configuration drift_step(const ParticleSystem& system, const Configuration& x, double h) {
    return x - h * system.gradient(x);
}

/// Unadjusted Langevin step x <- x - h grad U_N(x) + sqrt(2h) xi.
inline ChainState ula_step(const ParticleSystem& system, const ChainState& state, double h, const StreamRng& rng) {
    require(h > 0.0, ErrorKind::InvalidArgument, "step must be > 0");
    const Configuration grad = system.gradient(state.configuration);
    detail::check_finite(state.configuration, grad, state.step_index, rng.replica());
    ChainState next = state;
    next.configuration =
        state.configuration - h * grad + std::sqrt(2.0 * h) * detail::draw_noise(rng, state, system.d());
    next.potential.reset();
    next.gradient.reset();
    detail::check_finite(next.configuration, grad, state.step_index, rng.replica());
    ++next.step_index;
    return next;
}

/// log q(to | from) up to a constant for the Langevin proposal N(from - h grad(from), 2h I).
inline double langevin_log_proposal(const Configuration& to, const Configuration& from,
                                    const Configuration& grad_from, double h) {
    return -(to - from + h * grad_from).squaredNorm() / (4.0 * h);
}

/// Metropolis-adjusted Langevin step; reversible with respect to exp(-U_N).
inline ChainState mala_step(const ParticleSystem& system, const ChainState& state, double h, const StreamRng& rng) {
    require(h > 0.0, ErrorKind::InvalidArgument, "step must be > 0");
    ChainState next = state;
    if (!next.potential) next.potential = system.potential(state.configuration);
    if (!next.gradient) next.gradient = system.gradient(state.configuration);
    const Configuration& x = state.configuration;
    const Configuration& gx = *next.gradient;
    detail::check_finite(x, gx, state.step_index, rng.replica());

    const Configuration y = x - h * gx + std::sqrt(2.0 * h) * detail::draw_noise(rng, state, system.d());
    const Configuration gy = system.gradient(y);
    const double uy = system.potential(y);
    const double log_ratio = -uy + *next.potential + langevin_log_proposal(x, y, gy, h) -
                             langevin_log_proposal(y, x, gx, h);
    const double u = rng.uniform(static_cast<std::uint64_t>(state.step_index), 0u, StreamRng::kAccept);
    if (std::isfinite(log_ratio) && std::log(u) < log_ratio) {
        detail::check_finite(y, gy, state.step_index, rng.replica());
        next.configuration = y;
        next.potential = uy;
        next.gradient = gy;
        ++next.acceptance_count;
    }
    ++next.step_index;
    return next;
}

/// Scalar function of the configuration recorded along a chain.
struct Observable {
    std::string name;
    std::function<double(const Configuration&)> fn;
};

namespace observables {

/// Particle average of coordinate k.
inline Observable mean(int k = 0) {
    return {k == 0 ? "mean" : "mean[" + std::to_string(k) + "]",
            [k](const Configuration& x) { return x.col(k).mean(); }};
}

inline Observable particle(int i, int k = 0) {
    return {"x[" + std::to_string(i) + "][" + std::to_string(k) + "]",
            [i, k](const Configuration& x) { return x(i, k); }};
}

inline Observable potential(const ParticleSystem& system) {
    return {"U", [&system](const Configuration& x) { return system.potential(x); }};
}

inline std::vector<Observable> coordinates(int n, int d) {
    std::vector<Observable> out;
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) out.push_back(particle(i, k));
    return out;
}

} // namespace observables

struct ReplicaTrace {
    std::uint32_t replica = 0;
    std::vector<std::int64_t> steps;
    Eigen::MatrixXd values;  // records x observables
    std::int64_t acceptance_count = 0;
    std::int64_t proposals = 0;
    Configuration final_configuration;

    double acceptance_rate() const {
        return proposals > 0 ? static_cast<double>(acceptance_count) / static_cast<double>(proposals) : 0.0;
    }
};

struct Trajectory {
    double step = 0.0;
    std::vector<std::string> observables;
    std::vector<ReplicaTrace> replicas;

    /// Column of one observable for one replica.
    Eigen::VectorXd series(std::size_t replica, std::size_t observable) const {
        return replicas.at(replica).values.col(static_cast<Eigen::Index>(observable));
    }
};

inline Configuration initial_configuration(const ParticleSystem& system, const InitialCondition& init,
                                           const StreamRng& rng) {
    switch (init.kind) {
    case InitialCondition::Kind::Zeros: return Configuration::Zero(system.n(), system.d());
    case InitialCondition::Kind::Gaussian: {
        ChainState tmp = ChainState::start(Configuration::Zero(system.n(), system.d()));
        return init.scale * detail::draw_noise(rng, tmp, system.d(), StreamRng::kInitial);
    }
    case InitialCondition::Kind::Explicit:
        system.check_shape(init.explicit_config);
        return init.explicit_config;
    }
    return {};
}

/// Runs one replica; records every `thin` steps once step >= burn_in.
inline ReplicaTrace run_replica(const ParticleSystem& system, const SimConfig& config,
                                const std::vector<Observable>& obs, std::uint32_t replica) {
    const StreamRng rng(config.seed, replica);
    ChainState state = ChainState::start(initial_configuration(system, config.initial, rng));
    ReplicaTrace trace;
    trace.replica = replica;
    const auto n_records = (config.n_steps - config.burn_in + config.thin - 1) / config.thin;
    trace.values.resize(n_records, static_cast<Eigen::Index>(obs.size()));
    trace.steps.reserve(static_cast<std::size_t>(n_records));
    Eigen::Index row = 0;
    for (std::int64_t s = 0; s < config.n_steps; ++s) {
        if (s >= config.burn_in && (s - config.burn_in) % config.thin == 0) {
            trace.steps.push_back(s);
            for (std::size_t k = 0; k < obs.size(); ++k)
                trace.values(row, static_cast<Eigen::Index>(k)) = obs[k].fn(state.configuration);
            ++row;
        }
        state = config.sampler == Sampler::MALA ? mala_step(system, state, config.step, rng)
                                                : ula_step(system, state, config.step, rng);
    }
    trace.acceptance_count = config.sampler == Sampler::MALA ? state.acceptance_count : config.n_steps;
    trace.proposals = config.n_steps;
    trace.final_configuration = state.configuration;
    return trace;
}

/// Runs all replicas. Each replica's stream depends only on (seed, replica).
inline Trajectory run_chain(const ParticleSystem& system, const SimConfig& config, const std::vector<Observable>& obs) {
    config.validate();
    Trajectory traj;
    traj.step = config.step;
    for (const auto& o : obs) traj.observables.push_back(o.name);
    for (int r = 0; r < config.replicas; ++r)
        traj.replicas.push_back(run_replica(system, config, obs, static_cast<std::uint32_t>(r)));
    return traj;
}

/// Trajectory CSV: replica,step,time,observable,value; replica-major, step-minor.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "replica,step,time,observable,value\n";
    os.precision(17);
    for (const auto& rep : traj.replicas) {
        for (std::size_t r = 0; r < rep.steps.size(); ++r) {
            for (std::size_t k = 0; k < traj.observables.size(); ++k) {
                os << rep.replica << ',' << rep.steps[r] << ',' << static_cast<double>(rep.steps[r]) * traj.step << ','
                   << traj.observables[k] << ',' << rep.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k))
                   << '\n';
            }
        }
    }
}

/// Gaussian law N(mean, cov) on R^{Nd}.
struct GaussianState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Exact law of the Langevin diffusion for a quadratic U_N(x) = x.A x / 2:
/// m_t = e^{-At} m_0, S_t = e^{-At} S_0 e^{-At} + A^{-1}(I - e^{-2At}).
class GaussianFlow {
public:
    explicit GaussianFlow(Eigen::MatrixXd precision) : precision_(std::move(precision)) {
        require(precision_.rows() == precision_.cols(), ErrorKind::InvalidArgument, "precision must be square");
        eig_.compute(0.5 * (precision_ + precision_.transpose()));
        require(eig_.eigenvalues()(0) > 0.0, ErrorKind::GibbsUndefined, "precision is not positive definite");
    }

    const Eigen::MatrixXd& precision() const { return precision_; }
    Eigen::MatrixXd covariance() const {
        const auto& q = eig_.eigenvectors();
        return q * eig_.eigenvalues().cwiseInverse().asDiagonal() * q.transpose();
    }
    double lambda_min() const { return eig_.eigenvalues()(0); }
    double lambda_max() const { return eig_.eigenvalues()(eig_.eigenvalues().size() - 1); }

    GaussianState at(double t, const GaussianState& initial) const {
        const auto& q = eig_.eigenvectors();
        const Eigen::ArrayXd lam = eig_.eigenvalues().array();
        const Eigen::MatrixXd decay = q * (-lam * t).exp().matrix().asDiagonal() * q.transpose();
        const Eigen::MatrixXd fill =
            q * ((1.0 - (-2.0 * lam * t).exp()) / lam).matrix().asDiagonal() * q.transpose();
        GaussianState out;
        out.mean = decay * initial.mean;
        out.cov = decay * initial.cov * decay + fill;
        out.cov = 0.5 * (out.cov + out.cov.transpose());
        return out;
    }

private:
    Eigen::MatrixXd precision_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_;
};

inline bool is_quadratic(const ParticleSystem& system) {
    return dynamic_cast<const QuadraticMeanEnergy*>(&system.energy()) != nullptr;
}

/// Constant Hessian of a quadratic-energy system.
inline GaussianFlow gaussian_flow(const ParticleSystem& system) {
    require(is_quadratic(system), ErrorKind::InvalidArgument, "exact flow requires the quadratic-mean energy");
    return GaussianFlow(system.hessian(Configuration::Zero(system.n(), system.d())));
}

inline std::vector<GaussianState> ou_exact_flow(const ParticleSystem& system, const GaussianState& initial,
                                                const std::vector<double>& times) {
    const GaussianFlow flow = gaussian_flow(system);
    require(initial.mean.size() == system.flat_size() && initial.cov.rows() == system.flat_size() &&
                initial.cov.cols() == system.flat_size(),
            ErrorKind::DimensionMismatch, "initial law has the wrong dimension");
    std::vector<GaussianState> out;
    out.reserve(times.size());
    for (double t : times) {
        require(t >= 0.0, ErrorKind::InvalidArgument, "negative time");
        out.push_back(flow.at(t, initial));
    }
    return out;
}

/// 0.05 / lambda_max(A) for quadratic systems, 0.01 otherwise.
inline double default_step(const ParticleSystem& system) {
    if (is_quadratic(system)) {
        try {
            return 0.05 / gaussian_flow(system).lambda_max();
        } catch (const Error&) {
            return 0.01;
        }
    }
    return 0.01;
}

} // namespace mflsi
