#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <vector>

#include <Eigen/Dense>

#include "mflsi/energies.hpp"
#include "mflsi/error.hpp"
#include "mflsi/measures.hpp"

namespace mflsi {

using Potential1D = std::function<double(double)>;

/// Uniform grid on [lo, hi] carrying potential values.
struct Grid1D {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<double> potential;

    int n() const { return static_cast<int>(potential.size()); }
    double spacing() const { return (hi - lo) / (n() - 1); }
    double node(int k) const { return lo + k * spacing(); }

    static Grid1D sample(const Potential1D& u, double lo, double hi, int n) {
        require(n >= 3, ErrorKind::InvalidArgument, "grid needs n >= 3");
        require(lo < hi, ErrorKind::InvalidArgument, "grid needs lo < hi");
        Grid1D g{lo, hi, std::vector<double>(static_cast<std::size_t>(n))};
        for (int k = 0; k < n; ++k) g.potential[static_cast<std::size_t>(k)] = u(lo + k * (hi - lo) / (n - 1));
        return g;
    }
};

struct SpectralResult {
    double gap = 0.0;            // first nonzero eigenvalue of the reversible generator
    double ground_mass = 0.0;    // trapezoid mass of exp(-(U - min U))
    double boundary_ratio = 0.0; // max boundary density over max density
    bool converged = true;       // refining n by 2x moved the gap by < 1e-3 relative
    double lo = 0.0, hi = 0.0;
    int n = 0;
};

inline constexpr double kBoundaryDensityRatio = 1e-12;

namespace detail {

// Number of eigenvalues below x of the symmetric tridiagonal (diag, sub), by
// the signs of the LDL^T pivots of T - x I.
inline int sturm_count(const Eigen::VectorXd& diag, const Eigen::VectorXd& sub, double x) {
    int count = 0;
    double q = 1.0;
    for (Eigen::Index k = 0; k < diag.size(); ++k) {
        const double off = k > 0 ? sub[k - 1] * sub[k - 1] : 0.0;
        q = diag[k] - x - (k > 0 ? off / q : 0.0);
        if (q == 0.0) q = -std::numeric_limits<double>::epsilon() * (std::abs(diag[k]) + std::abs(x) + 1e-300);
        if (q < 0.0) ++count;
    }
    return count;
}

// k-th smallest eigenvalue (0-based) by bisection on the Sturm count.
inline double tridiagonal_eigenvalue(const Eigen::VectorXd& diag, const Eigen::VectorXd& sub, int k) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index i = 0; i < diag.size(); ++i) {
        const double r = (i > 0 ? std::abs(sub[i - 1]) : 0.0) + (i + 1 < diag.size() ? std::abs(sub[i]) : 0.0);
        lo = std::min(lo, diag[i] - r);
        hi = std::max(hi, diag[i] + r);
    }
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (sturm_count(diag, sub, mid) > k) hi = mid; else lo = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

/// Spectral gap of f'' - U' f' with zero-flux boundaries, from the symmetric
/// finite-volume form M^{-1/2} K M^{-1/2}: K is the weighted graph Laplacian with
/// conductances exp(-U) at cell midpoints over h, M the lumped masses.
inline SpectralResult grid_poincare(const Grid1D& grid) {
    const int n = grid.n();
    require(n >= 3, ErrorKind::InvalidArgument, "grid needs n >= 3");
    require(grid.lo < grid.hi, ErrorKind::InvalidArgument, "grid needs lo < hi");
    const double h = grid.spacing();
    const auto& u = grid.potential;
    for (double v : u) require(std::isfinite(v), ErrorKind::InvalidArgument, "non-finite potential on grid");
    const double umin = *std::min_element(u.begin(), u.end());

    Eigen::VectorXd mass(n), cond(n - 1);
    for (int k = 0; k < n; ++k) mass[k] = h * std::exp(-(u[static_cast<std::size_t>(k)] - umin));
    mass[0] *= 0.5;
    mass[n - 1] *= 0.5;
    for (int k = 0; k + 1 < n; ++k)
        cond[k] = std::exp(-0.5 * (u[static_cast<std::size_t>(k)] + u[static_cast<std::size_t>(k) + 1]) + umin) / h;

    SpectralResult res;
    res.lo = grid.lo;
    res.hi = grid.hi;
    res.n = n;
    res.ground_mass = mass.sum();
    res.boundary_ratio = std::max(std::exp(-(u.front() - umin)), std::exp(-(u.back() - umin)));
    require(res.boundary_ratio < kBoundaryDensityRatio, ErrorKind::WindowTooSmall,
            "density at the window boundary is not negligible");

    Eigen::VectorXd diag(n), sub(n - 1);
    for (int k = 0; k < n; ++k) {
        const double c = (k > 0 ? cond[k - 1] : 0.0) + (k + 1 < n ? cond[k] : 0.0);
        diag[k] = c / mass[k];
    }
    for (int k = 0; k + 1 < n; ++k) sub[k] = -cond[k] / std::sqrt(mass[k] * mass[k + 1]);

    res.gap = std::max(0.0, detail::tridiagonal_eigenvalue(diag, sub, 1));
    return res;
}

/// Grid gap of a potential function, with a 2x refinement convergence check.
inline SpectralResult grid_poincare(const Potential1D& u, double lo, double hi, int n, bool check_convergence = true) {
    SpectralResult res = grid_poincare(Grid1D::sample(u, lo, hi, n));
    if (check_convergence) {
        const double fine = grid_poincare(Grid1D::sample(u, lo, hi, 2 * n - 1)).gap;
        res.converged = std::abs(fine - res.gap) < 1e-3 * std::max(std::abs(fine), 1e-300);
    }
    return res;
}

struct Window {
    double lo = 0.0;
    double hi = 0.0;
};

/// Smallest interval around the well(s) of `u` outside of which u exceeds its
/// minimum by more than `rise` (34 ~ 8 standard deviations plus margin).
inline Window auto_window(const Potential1D& u, double center = 0.0, double rise = 34.0) {
    constexpr int samples = 4001;
    for (double radius = 1.0; radius < 1e6; radius *= 2.0) {
        const double lo = center - radius, hi = center + radius;
        const double h = (hi - lo) / (samples - 1);
        std::vector<double> vals(samples);
        for (int k = 0; k < samples; ++k) vals[static_cast<std::size_t>(k)] = u(lo + k * h);
        const auto it = std::min_element(vals.begin(), vals.end());
        if (vals.front() - *it <= rise || vals.back() - *it <= rise) continue;

        // Refine the minimum and the two level crossings so that the window
        // moves exactly with translations of the potential.
        const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
        const double xm = lo + static_cast<double>(it - vals.begin()) * h;
        double a = xm - h, b = xm + h;
        for (int iter = 0; iter < 200 && b - a > 1e-15 * (1.0 + std::abs(xm)); ++iter) {
            const double c = b - golden * (b - a), d = a + golden * (b - a);
            if (u(c) < u(d)) b = d; else a = c;
        }
        const double level = std::min(*it, u(0.5 * (a + b))) + rise;
        auto crossing = [&](double inside, double outside) {
            for (int iter = 0; iter < 200; ++iter) {
                const double mid = 0.5 * (inside + outside);
                if (mid == inside || mid == outside) break;
                if (u(mid) <= level) inside = mid; else outside = mid;
            }
            return outside;
        };
        int first = 0, last = samples - 1;
        while (vals[static_cast<std::size_t>(first)] > level) ++first;
        while (vals[static_cast<std::size_t>(last)] > level) --last;
        return {crossing(lo + first * h, lo + (first - 1) * h), crossing(lo + last * h, lo + (last + 1) * h)};
    }
    throw Error(ErrorKind::WindowTooSmall, "potential does not confine within |x| < 1e6");
}

/// x_1 -> N F(mu_(x_1, frozen)), the log-density of particle 1 given the others.
inline Potential1D conditional_potential(const ParticleSystem& system, const Eigen::VectorXd& frozen) {
    require(system.d() == 1, ErrorKind::DimensionMismatch, "conditional potential requires d = 1");
    require(frozen.size() == system.n() - 1, ErrorKind::DimensionMismatch, "frozen block must have N - 1 entries");
    const EnergyPtr energy = system.energy_ptr();
    const int n = system.n();
    return [energy, frozen, n](double x1) {
        Configuration x(n, 1);
        x(0, 0) = x1;
        if (n > 1) x.col(0).tail(n - 1) = frozen;
        return static_cast<double>(n) * energy->eval(empirical(x));
    };
}

/// Density on a grid with trapezoid quadrature.
struct GridDensity {
    std::vector<double> x;
    std::vector<double> density;

    double integrate(const Potential1D& f) const {
        double acc = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            const double w = (k == 0 || k + 1 == x.size()) ? 0.5 : 1.0;
            acc += w * f(x[k]) * density[k];
        }
        return acc * (x[1] - x[0]);
    }
    double mean() const { return integrate([](double y) { return y; }); }
    double variance(const Potential1D& f = [](double y) { return y; }) const {
        const double m = integrate(f);
        return integrate([&](double y) { const double v = f(y) - m; return v * v; });
    }

    /// Quadrature measure: atoms at the nodes with trapezoid weights.
    DiscreteMeasure as_measure() const {
        const auto n = static_cast<Eigen::Index>(x.size());
        Eigen::MatrixXd pts(n, 1);
        Eigen::VectorXd w(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            pts(k, 0) = x[static_cast<std::size_t>(k)];
            w[k] = density[static_cast<std::size_t>(k)] * ((k == 0 || k + 1 == n) ? 0.5 : 1.0);
        }
        w /= w.sum();
        return DiscreteMeasure(std::move(pts), std::move(w));
    }
};

inline void write_density_csv(std::ostream& os, const GridDensity& g) {
    os << "x,density\n";
    os.precision(17);
    for (std::size_t k = 0; k < g.x.size(); ++k) os << g.x[k] << ',' << g.density[k] << '\n';
}

struct FixedPointResult {
    GridDensity density;
    double residual = std::numeric_limits<double>::infinity();  // sup |T(m) - m|
    int iterations = 0;
    bool converged = false;
    std::vector<double> residual_history;
};

/// Damped iteration m <- (1 - damping) m + damping T(m) with
/// T(m) = normalize(exp(-dF/dm(m, .))), started from T(uniform on the window).
inline FixedPointResult proximal_gibbs_fixed_point(const MeanFieldEnergy& energy, double lo, double hi, int n,
                                                   int max_iter = 500, double tol = 1e-8, double damping = 0.5) {
    require(energy.required_dim() == 0 || energy.required_dim() == 1, ErrorKind::DimensionMismatch,
            "fixed point requires d = 1");
    require(n >= 3 && lo < hi, ErrorKind::InvalidArgument, "invalid grid");
    const double h = (hi - lo) / (n - 1);
    GridDensity cur;
    cur.x.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) cur.x[static_cast<std::size_t>(k)] = lo + k * h;
    cur.density.assign(static_cast<std::size_t>(n), 1.0 / (hi - lo));

    auto apply = [&](const GridDensity& m) {
        const DiscreteMeasure mu = m.as_measure();
        std::vector<double> logd(static_cast<std::size_t>(n));
        Eigen::VectorXd pt(1);
        for (int k = 0; k < n; ++k) {
            pt[0] = m.x[static_cast<std::size_t>(k)];
            logd[static_cast<std::size_t>(k)] = -energy.flat_derivative(mu, pt);
        }
        const double top = *std::max_element(logd.begin(), logd.end());
        GridDensity out{m.x, std::vector<double>(static_cast<std::size_t>(n))};
        for (int k = 0; k < n; ++k)
            out.density[static_cast<std::size_t>(k)] = std::exp(logd[static_cast<std::size_t>(k)] - top);
        const double z = out.integrate([](double) { return 1.0; });
        for (double& v : out.density) v /= z;
        return out;
    };

    FixedPointResult res;
    cur = apply(cur);
    for (int it = 1; it <= max_iter; ++it) {
        const GridDensity next = apply(cur);
        double sup = 0.0;
        for (int k = 0; k < n; ++k)
            sup = std::max(sup, std::abs(next.density[static_cast<std::size_t>(k)] - cur.density[static_cast<std::size_t>(k)]));
        res.residual_history.push_back(sup);
        res.residual = sup;
        res.iterations = it;
        if (sup < tol) {
            res.converged = true;
            break;
        }
        for (int k = 0; k < n; ++k) {
            auto& v = cur.density[static_cast<std::size_t>(k)];
            v = (1.0 - damping) * v + damping * next.density[static_cast<std::size_t>(k)];
        }
    }
    res.density = std::move(cur);
    return res;
}

/// Exact constants of the Gaussian Gibbs measure of a quadratic system.
struct GaussianExact {
    Eigen::MatrixXd precision;
    Eigen::MatrixXd covariance;
    Eigen::VectorXd eigenvalues;  // ascending
    double poincare = 0.0;        // = lambda_min(precision)
    double lsi = 0.0;             // = lambda_min(precision)
};

inline GaussianExact gaussian_exact(const ParticleSystem& system) {
    const auto* quad = dynamic_cast<const QuadraticMeanEnergy*>(&system.energy());
    require(quad != nullptr, ErrorKind::InvalidArgument, "closed form requires the quadratic-mean energy");
    require(quad->a() < 1.0, ErrorKind::GibbsUndefined, "a >= 1: exp(-U_N) is not integrable");
    GaussianExact out;
    out.precision = system.hessian(Configuration::Zero(system.n(), system.d()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.precision);
    out.eigenvalues = es.eigenvalues();
    require(out.eigenvalues(0) > 0.0, ErrorKind::GibbsUndefined, "precision is not positive definite");
    out.covariance = es.eigenvectors() * out.eigenvalues.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    out.poincare = out.lsi = out.eigenvalues(0);
    return out;
}

/// KL(N(mean_a, cov_a) | N(mean_b, cov_b)).
inline double gaussian_kl(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& cov_a, const Eigen::VectorXd& mean_b,
                          const Eigen::MatrixXd& cov_b) {
    const auto k = mean_a.size();
    require(mean_b.size() == k && cov_a.rows() == k && cov_a.cols() == k && cov_b.rows() == k && cov_b.cols() == k,
            ErrorKind::DimensionMismatch, "Gaussian dimensions differ");
    Eigen::LLT<Eigen::MatrixXd> lb(cov_b);
    require(lb.info() == Eigen::Success, ErrorKind::InvalidArgument, "reference covariance is not positive definite");
    Eigen::LLT<Eigen::MatrixXd> la(cov_a);
    require(la.info() == Eigen::Success, ErrorKind::InvalidArgument, "covariance is not positive definite");
    const Eigen::VectorXd dm = mean_a - mean_b;
    const double trace = lb.solve(cov_a).trace();
    const double quad = dm.dot(lb.solve(dm));
    const double logdet_b = 2.0 * lb.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double logdet_a = 2.0 * la.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return 0.5 * (trace - static_cast<double>(k) + quad + logdet_b - logdet_a);
}

/// Relative Fisher information I(N(mean_a, cov_a) | N(mean_b, cov_b)).
inline double gaussian_fisher(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& cov_a,
                              const Eigen::VectorXd& mean_b, const Eigen::MatrixXd& cov_b) {
    Eigen::LLT<Eigen::MatrixXd> lb(cov_b), la(cov_a);
    require(lb.info() == Eigen::Success && la.info() == Eigen::Success, ErrorKind::InvalidArgument,
            "covariances must be positive definite");
    const auto k = mean_a.size();
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(k, k);
    const Eigen::MatrixXd diff = lb.solve(id) - la.solve(id);
    const Eigen::VectorXd shift = lb.solve(Eigen::VectorXd(mean_a - mean_b));
    return (diff * cov_a * diff.transpose()).trace() + shift.squaredNorm();
}

} // namespace mflsi
