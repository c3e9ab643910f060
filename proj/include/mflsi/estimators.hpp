#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "mflsi/bounds.hpp"
#include "mflsi/dynamics.hpp"
#include "mflsi/energies.hpp"
#include "mflsi/error.hpp"
#include "mflsi/spectral1d.hpp"

namespace mflsi {

enum class GapMethod { AutocorrFit, VarianceDecay };

inline std::string to_string(GapMethod m) { return m == GapMethod::AutocorrFit ? "autocorr-fit" : "variance-decay"; }

struct GapEstimate {
    double rate = std::numeric_limits<double>::quiet_NaN();  // per unit time
    double std_error = std::numeric_limits<double>::quiet_NaN();
    GapMethod method = GapMethod::AutocorrFit;
    double effective_samples = 0.0;
    bool success = false;
    bool no_correlation = false;   // decorrelated within one record; rate is the 1/h floor
    bool low_confidence = false;   // fewer than 3 fitted e-folds in the horizon
    bool zero_variance = false;
};

namespace detail {

/// Normalized autocorrelation rho(0..max_lag) via zero-padded FFT.
inline std::vector<double> autocorrelation(const Eigen::VectorXd& series, int max_lag) {
    const auto n = static_cast<std::size_t>(series.size());
    const double mean = series.mean();
    std::size_t len = 1;
    while (len < 2 * n) len <<= 1;
    std::vector<double> padded(len, 0.0);
    for (std::size_t i = 0; i < n; ++i) padded[i] = series[static_cast<Eigen::Index>(i)] - mean;
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, padded);
    for (auto& c : spec) c = std::norm(c);
    std::vector<double> acov;
    fft.inv(acov, spec);
    const std::size_t lags = std::min<std::size_t>(static_cast<std::size_t>(max_lag), n - 1);
    std::vector<double> rho(lags + 1, 0.0);
    if (acov[0] <= 0.0) return rho;
    for (std::size_t k = 0; k <= lags; ++k) rho[k] = acov[k] / acov[0];
    return rho;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LineFit weighted_line(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w) {
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
        sxx += w[i] * x[i] * x[i];
        sxy += w[i] * x[i] * y[i];
    }
    const double det = sw * sxx - sx * sx;
    LineFit f;
    f.slope = (sw * sxy - sx * sy) / det;
    f.intercept = (sy - f.slope * sx) / sw;
    return f;
}

inline constexpr double kAutocorrCutoff = 0.05;

struct AutocorrFit {
    double rate = 0.0;
    bool no_correlation = false;
    bool ok = false;
    double tau_int = 1.0;  // integrated autocorrelation time in records
};

inline AutocorrFit fit_autocorr(const Eigen::VectorXd& series, double dt, int max_lag) {
    AutocorrFit out;
    const auto rho = autocorrelation(series, max_lag);
    std::vector<double> lag, logr, w;
    double tau = 1.0;
    for (std::size_t k = 1; k < rho.size(); ++k) {
        if (rho[k] <= kAutocorrCutoff || rho[k] >= rho[k - 1]) break;
        lag.push_back(static_cast<double>(k) * dt);
        logr.push_back(std::log(rho[k]));
        w.push_back(rho[k] * rho[k]);
        tau += 2.0 * rho[k];
    }
    out.tau_int = tau;
    if (lag.size() < 2) {
        out.no_correlation = rho.size() > 1 && rho[1] <= kAutocorrCutoff;
        out.rate = 1.0 / dt;
        out.ok = out.no_correlation;
        return out;
    }
    const LineFit f = weighted_line(lag, logr, w);
    out.rate = -f.slope;
    out.ok = out.rate > 0.0;
    return out;
}

inline double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

} // namespace detail

/// Exponential rate of the autocorrelation of a stationary scalar series
/// sampled every `dt` time units. The fit runs over the initial monotone window
/// where rho > 0.05; stderr comes from `batches` contiguous batch means.
inline GapEstimate estimate_gap_autocorr(const Eigen::VectorXd& series, double dt, int max_lag = 5000, int batches = 20) {
    require(dt > 0.0, ErrorKind::InvalidArgument, "sampling interval must be > 0");
    require(series.size() >= 16, ErrorKind::InvalidArgument, "series too short for autocorrelation");
    GapEstimate est;
    est.method = GapMethod::AutocorrFit;
    if ((series.array() - series.mean()).abs().maxCoeff() == 0.0) {
        est.zero_variance = true;
        return est;
    }
    const auto full = detail::fit_autocorr(series, dt, max_lag);
    est.rate = full.rate;
    est.no_correlation = full.no_correlation;
    est.effective_samples = static_cast<double>(series.size()) / full.tau_int;
    est.success = full.ok;
    if (!full.ok || full.no_correlation) {
        est.std_error = 0.0;
        return est;
    }
    const Eigen::Index len = series.size() / batches;
    std::vector<double> rates;
    if (len >= 16) {
        for (int b = 0; b < batches; ++b) {
            const auto fit = detail::fit_autocorr(series.segment(b * len, len), dt, max_lag);
            if (fit.ok && !fit.no_correlation) rates.push_back(fit.rate);
        }
    }
    est.std_error = detail::sample_sd(rates) / std::sqrt(static_cast<double>(rates.size()));
    return est;
}

/// Across-replica variance of `observable` along time.
inline std::vector<double> replica_variance(const Trajectory& traj, std::size_t observable,
                                            const std::vector<std::size_t>& members) {
    const auto records = traj.replicas.front().values.rows();
    std::vector<double> var(static_cast<std::size_t>(records), 0.0);
    for (Eigen::Index r = 0; r < records; ++r) {
        double m = 0.0, s = 0.0;
        for (std::size_t i : members) m += traj.replicas[i].values(r, static_cast<Eigen::Index>(observable));
        m /= static_cast<double>(members.size());
        for (std::size_t i : members) {
            const double v = traj.replicas[i].values(r, static_cast<Eigen::Index>(observable)) - m;
            s += v * v;
        }
        var[static_cast<std::size_t>(r)] = s / static_cast<double>(members.size() - 1);
    }
    return var;
}

namespace detail {

struct VarianceDecayFit {
    double rate = 0.0;  // decay rate of the excess variance
    bool ok = false;
};

/// Fits log(V(t) - V_inf) where V_inf averages the final quarter and the
/// excess stays above five noise levels.
inline VarianceDecayFit fit_variance_decay(const std::vector<double>& times, const std::vector<double>& var,
                                           std::size_t n_replicas) {
    VarianceDecayFit out;
    const std::size_t n = var.size();
    const std::size_t tail = std::max<std::size_t>(1, n / 4);
    double v_inf = 0.0;
    for (std::size_t i = n - tail; i < n; ++i) v_inf += var[i];
    v_inf /= static_cast<double>(tail);
    const double noise = v_inf * std::sqrt(2.0 / static_cast<double>(n_replicas - 1));
    std::vector<double> t, y, w;
    for (std::size_t i = 0; i < n - tail; ++i) {
        const double excess = var[i] - v_inf;
        if (excess <= 5.0 * noise) break;
        t.push_back(times[i]);
        y.push_back(std::log(excess));
        w.push_back(1.0);
    }
    if (t.size() < 3) return out;
    out.rate = -weighted_line(t, y, w).slope;
    out.ok = out.rate > 0.0;
    return out;
}

} // namespace detail

inline GapEstimate estimate_gap_variance_decay(const Trajectory& traj, std::size_t observable, int bootstrap = 64) {
    GapEstimate est;
    est.method = GapMethod::VarianceDecay;
    const std::size_t reps = traj.replicas.size();
    require(reps >= 8, ErrorKind::InvalidArgument, "variance decay needs at least 8 replicas");
    std::vector<double> times;
    for (auto s : traj.replicas.front().steps) times.push_back(static_cast<double>(s) * traj.step);
    std::vector<std::size_t> all(reps);
    for (std::size_t i = 0; i < reps; ++i) all[i] = i;
    const auto var = replica_variance(traj, observable, all);
    if (*std::max_element(var.begin(), var.end()) == 0.0) {
        est.zero_variance = true;
        return est;
    }
    const auto fit = detail::fit_variance_decay(times, var, reps);
    if (!fit.ok) return est;
    est.rate = 0.5 * fit.rate;
    est.success = true;
    est.effective_samples = static_cast<double>(reps);
    const double horizon = times.back() - times.front();
    est.low_confidence = fit.rate * horizon < 3.0;

    std::mt19937_64 gen(0x5eed);
    std::uniform_int_distribution<std::size_t> pick(0, reps - 1);
    std::vector<double> rates;
    for (int b = 0; b < bootstrap; ++b) {
        std::vector<std::size_t> members(reps);
        for (auto& m : members) m = pick(gen);
        const auto bf = detail::fit_variance_decay(times, replica_variance(traj, observable, members), reps);
        if (bf.ok) rates.push_back(0.5 * bf.rate);
    }
    est.std_error = detail::sample_sd(rates);
    return est;
}

/// Gap estimate from the decay of the across-replica variance of an
/// observable started from an over-dispersed law: the excess variance decays
/// like exp(-2 rho t), so the estimate is half the fitted rate. Uses
/// config.replicas (>= 256 recommended); stderr from a replica bootstrap.
inline GapEstimate estimate_gap_variance_decay(const ParticleSystem& system, SimConfig config, const Observable& observable,
                                               double horizon, int bootstrap = 64) {
    require(horizon > 0.0, ErrorKind::InvalidArgument, "horizon must be > 0");
    require(config.replicas >= 8, ErrorKind::InvalidArgument, "variance decay needs at least 8 replicas");
    config.n_steps = std::max<std::int64_t>(2, static_cast<std::int64_t>(std::ceil(horizon / config.step)));
    config.burn_in = 0;
    const Trajectory traj = run_chain(system, config, {observable});
    return estimate_gap_variance_decay(traj, 0, bootstrap);
}

struct EntropyDecayCurve {
    std::vector<double> times;
    std::vector<double> entropy;  // H(nu_t | m_*^N)
    double rate = std::numeric_limits<double>::quiet_NaN();
    double floor = 0.0;
    double exact_rate = 0.0;  // 2 lambda_min(A)
    std::optional<double> corollary_rate;  // 2 rho_{N,*} when the corollary applies
    bool identically_zero = false;
    bool comparison_skipped = true;
    bool sound = true;  // rate >= 2 rho_{N,*} (when compared)
};

namespace detail {

struct ExpFloorFit {
    double rate = 0.0, amplitude = 0.0, floor = 0.0, ssr = 0.0;
};

// For fixed rate c, weighted linear least squares for (amplitude, floor >= 0)
// with relative weights 1/H.
inline ExpFloorFit fit_at_rate(const std::vector<double>& t, const std::vector<double>& h, double c) {
    double saa = 0, sab = 0, sbb = 0, say = 0, sby = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double w = 1.0 / (h[i] * h[i]);
        const double a = std::exp(-c * t[i]);
        saa += w * a * a;
        sab += w * a;
        sbb += w;
        say += w * a * h[i];
        sby += w * h[i];
    }
    ExpFloorFit f;
    f.rate = c;
    const double det = saa * sbb - sab * sab;
    f.amplitude = (say * sbb - sab * sby) / det;
    f.floor = (saa * sby - sab * say) / det;
    if (!(f.floor >= 0.0) || !std::isfinite(det) || std::abs(det) < 1e-300) {
        f.floor = 0.0;
        f.amplitude = say / saa;
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = (h[i] - f.amplitude * std::exp(-c * t[i]) - f.floor) / h[i];
        f.ssr += r * r;
    }
    return f;
}

inline ExpFloorFit fit_exp_floor(const std::vector<double>& t, const std::vector<double>& h) {
    // Log-spaced scan then golden-section refinement in log c.
    double best_lc = 0.0;
    double best = std::numeric_limits<double>::infinity();
    const int scan = 400;
    const double lmin = std::log(1e-6), lmax = std::log(1e3);
    for (int k = 0; k <= scan; ++k) {
        const double lc = lmin + (lmax - lmin) * k / scan;
        const double ssr = fit_at_rate(t, h, std::exp(lc)).ssr;
        if (ssr < best) {
            best = ssr;
            best_lc = lc;
        }
    }
    const double step = (lmax - lmin) / scan;
    double a = best_lc - step, b = best_lc + step;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
        const double c = b - g * (b - a), d = a + g * (b - a);
        if (fit_at_rate(t, h, std::exp(c)).ssr < fit_at_rate(t, h, std::exp(d)).ssr) b = d; else a = c;
    }
    return fit_at_rate(t, h, std::exp(0.5 * (a + b)));
}

} // namespace detail

/// Exact relative-entropy curve H(nu_t | m_*^N) for the quadratic system via
/// the Gaussian flow, with a fitted rate and floor H ~ A e^{-ct} + floor.
/// `rho_star` is the corollary LSI constant; when given the curve is checked
/// against the guaranteed rate 2 rho_star.
inline EntropyDecayCurve entropy_decay_gaussian(const ParticleSystem& system, const GaussianState& initial,
                                                const std::vector<double>& times,
                                                std::optional<double> rho_star = std::nullopt) {
    const GaussianFlow flow = gaussian_flow(system);
    const Eigen::MatrixXd target_cov = flow.covariance();
    const Eigen::VectorXd target_mean = Eigen::VectorXd::Zero(system.flat_size());
    EntropyDecayCurve curve;
    curve.times = times;
    curve.exact_rate = 2.0 * flow.lambda_min();
    for (double t : times) {
        const auto s = flow.at(t, initial);
        curve.entropy.push_back(std::max(0.0, gaussian_kl(s.mean, s.cov, target_mean, target_cov)));
    }
    const double top = *std::max_element(curve.entropy.begin(), curve.entropy.end());
    if (top <= 1e-14) {
        curve.identically_zero = true;
        curve.floor = 0.0;
        return curve;
    }
    std::vector<double> ft, fh;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (curve.entropy[i] > 1e-13 * top) {
            ft.push_back(times[i]);
            fh.push_back(curve.entropy[i]);
        }
    require(ft.size() >= 3, ErrorKind::InvalidArgument, "need at least three nonzero entropy values to fit");
    const auto fit = detail::fit_exp_floor(ft, fh);
    curve.rate = fit.rate;
    curve.floor = fit.floor;
    if (rho_star) {
        curve.corollary_rate = 2.0 * *rho_star;
        curve.comparison_skipped = false;
        curve.sound = curve.rate >= *curve.corollary_rate;
    }
    return curve;
}

struct ConditionalGapReport {
    std::vector<double> gaps;
    double min = std::numeric_limits<double>::quiet_NaN();
    double median = std::numeric_limits<double>::quiet_NaN();
    double spread = std::numeric_limits<double>::quiet_NaN();  // max - min
    double claimed = 0.0;
    bool pass = false;
    bool all_converged = true;
};

/// Grid gaps of particle 1's conditional law at frozen configurations
/// sampled from the chain described by `config` (all recorded states of
/// replica 0). PASS iff min gap >= claimed - tolerance.
inline ConditionalGapReport conditional_gap_mc(const ParticleSystem& system, const SimConfig& config, double claimed,
                                               double tolerance = 1e-3, int grid_n = 2001) {
    require(system.d() == 1, ErrorKind::DimensionMismatch, "conditional gaps require d = 1");
    config.validate();
    const auto obs = observables::coordinates(system.n(), 1);
    const ReplicaTrace trace = run_replica(system, config, obs, 0);
    ConditionalGapReport rep;
    rep.claimed = claimed;
    for (Eigen::Index r = 0; r < trace.values.rows(); ++r) {
        const Eigen::VectorXd frozen = trace.values.row(r).tail(system.n() - 1).transpose();
        const Potential1D u = conditional_potential(system, frozen);
        const double center = frozen.size() > 0 ? frozen.mean() : 0.0;
        const Window w = auto_window(u, center);
        const SpectralResult s = grid_poincare(u, w.lo, w.hi, grid_n);
        rep.gaps.push_back(s.gap);
        rep.all_converged = rep.all_converged && s.converged;
    }
    require(!rep.gaps.empty(), ErrorKind::InvalidArgument, "chain recorded no configurations");
    std::vector<double> sorted = rep.gaps;
    std::sort(sorted.begin(), sorted.end());
    rep.min = sorted.front();
    rep.median = sorted[sorted.size() / 2];
    rep.spread = sorted.back() - sorted.front();
    rep.pass = rep.min >= claimed - tolerance;
    return rep;
}

} // namespace mflsi
