#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "mflsi/error.hpp"

namespace mflsi {

/// N x d particle configuration, one particle per row.
using Configuration = Eigen::MatrixXd;

/// Finitely supported probability measure on R^d. Atoms are rows of `points()`.
/// Duplicate atoms are kept as separate entries.
class DiscreteMeasure {
public:
    static constexpr double kWeightTolerance = 1e-12;

    DiscreteMeasure(Eigen::MatrixXd points, Eigen::VectorXd weights)
        : points_(std::move(points)), weights_(std::move(weights)) {
        require(points_.rows() >= 1 && points_.cols() >= 1, ErrorKind::InvalidArgument,
                "measure needs at least one atom and d >= 1");
        require(points_.rows() == weights_.size(), ErrorKind::InvalidArgument,
                "points and weights have different lengths");
        require(points_.allFinite(), ErrorKind::InvalidArgument, "non-finite atom coordinate");
        require(weights_.allFinite() && (weights_.array() >= 0.0).all(), ErrorKind::InvalidArgument,
                "weights must be finite and nonnegative");
        require(std::abs(weights_.sum() - 1.0) <= kWeightTolerance, ErrorKind::InvalidArgument,
                "weights must sum to 1");
    }

    static DiscreteMeasure dirac(const Eigen::Ref<const Eigen::VectorXd>& x) {
        return DiscreteMeasure(x.transpose(), Eigen::VectorXd::Ones(1));
    }

    static DiscreteMeasure uniform(Eigen::MatrixXd points) {
        const Eigen::Index n = points.rows();
        require(n >= 1, ErrorKind::InvalidArgument, "empty configuration");
        return DiscreteMeasure(std::move(points), Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)));
    }

    int size() const { return static_cast<int>(points_.rows()); }
    int dim() const { return static_cast<int>(points_.cols()); }
    const Eigen::MatrixXd& points() const { return points_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    auto point(int i) const { return points_.row(i).transpose(); }
    double weight(int i) const { return weights_[i]; }

    Eigen::VectorXd mean() const { return points_.transpose() * weights_; }

    /// Integral of a function of the position against the measure.
    template <class Fn>
    double integrate(Fn&& fn) const {
        double acc = 0.0;
        for (int i = 0; i < size(); ++i) acc += weights_[i] * fn(point(i));
        return acc;
    }

    bool is_uniform() const {
        const double w = 1.0 / static_cast<double>(size());
        return ((weights_.array() - w).abs() <= kWeightTolerance).all();
    }

private:
    Eigen::MatrixXd points_;
    Eigen::VectorXd weights_;
};

/// Empirical measure (1/N) sum delta_{x_i} of a configuration.
inline DiscreteMeasure empirical(const Configuration& x) {
    require(x.rows() >= 1, ErrorKind::InvalidArgument, "empty configuration");
    return DiscreteMeasure::uniform(x);
}

/// t mu + (1 - t) nu. Zero-weight atoms are dropped.
inline DiscreteMeasure mix(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double t) {
    require(t >= 0.0 && t <= 1.0, ErrorKind::InvalidArgument, "mixing weight outside [0,1]");
    require(mu.dim() == nu.dim(), ErrorKind::DimensionMismatch, "mixing measures of different dimension");
    std::vector<int> keep_mu, keep_nu;
    for (int i = 0; i < mu.size(); ++i)
        if (t * mu.weight(i) > 0.0) keep_mu.push_back(i);
    for (int j = 0; j < nu.size(); ++j)
        if ((1.0 - t) * nu.weight(j) > 0.0) keep_nu.push_back(j);
    const auto n = static_cast<Eigen::Index>(keep_mu.size() + keep_nu.size());
    Eigen::MatrixXd pts(n, mu.dim());
    Eigen::VectorXd w(n);
    Eigen::Index k = 0;
    for (int i : keep_mu) {
        pts.row(k) = mu.points().row(i);
        w[k++] = t * mu.weight(i);
    }
    for (int j : keep_nu) {
        pts.row(k) = nu.points().row(j);
        w[k++] = (1.0 - t) * nu.weight(j);
    }
    w /= w.sum();
    return DiscreteMeasure(std::move(pts), std::move(w));
}

namespace detail {

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method with
/// row/column potentials). Returns assignment[row] = column.
inline std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    for (int row = 1; row <= n; ++row) {
        match[0] = row;
        int col0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[col0] = 1;
            const int row0 = match[col0];
            double delta = inf;
            int col1 = 0;
            for (int col = 1; col <= n; ++col) {
                if (used[col]) continue;
                const double cur = cost(row0 - 1, col - 1) - u[row0] - v[col];
                if (cur < minv[col]) {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if (minv[col] < delta) {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for (int col = 0; col <= n; ++col) {
                if (used[col]) {
                    u[match[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
        } while (match[col0] != 0);
        do {
            const int col1 = way[col0];
            match[col0] = match[col1];
            col0 = col1;
        } while (col0 != 0);
    }
    std::vector<int> assignment(n);
    for (int col = 1; col <= n; ++col) assignment[match[col] - 1] = col - 1;
    return assignment;
}

inline double w2_quantile_1d(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    auto sorted = [](const DiscreteMeasure& m) {
        std::vector<int> idx(m.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return m.points()(a, 0) < m.points()(b, 0); });
        return idx;
    };
    const auto ia = sorted(mu);
    const auto ib = sorted(nu);
    std::size_t a = 0, b = 0;
    double rem_a = mu.weight(ia[0]);
    double rem_b = nu.weight(ib[0]);
    double cost = 0.0;
    while (a < ia.size() && b < ib.size()) {
        const double mass = std::min(rem_a, rem_b);
        const double diff = mu.points()(ia[a], 0) - nu.points()(ib[b], 0);
        cost += mass * diff * diff;
        rem_a -= mass;
        rem_b -= mass;
        // Whichever side is exhausted advances; round-off leftovers below the
        // weight tolerance are treated as exhausted.
        if (rem_a <= DiscreteMeasure::kWeightTolerance * 1e-3) {
            if (++a < ia.size()) rem_a = mu.weight(ia[a]);
        }
        if (rem_b <= DiscreteMeasure::kWeightTolerance * 1e-3) {
            if (++b < ib.size()) rem_b = nu.weight(ib[b]);
        }
    }
    return cost;
}

inline double w2_assignment(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    const int n = mu.size();
    Eigen::MatrixXd cost(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) cost(i, j) = (mu.points().row(i) - nu.points().row(j)).squaredNorm();
    const auto assignment = solve_assignment(cost);
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost(i, assignment[i]);
    return total / static_cast<double>(n);
}

} // namespace detail

/// Exact squared Wasserstein-2 distance. Supported: d = 1 with arbitrary
/// weights (quantile coupling), or any d with uniform weights on supports of
/// equal size (assignment problem).
inline double w2_squared(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    require(mu.dim() == nu.dim(), ErrorKind::DimensionMismatch, "W2 between measures of different dimension");
    if (mu.dim() == 1) return detail::w2_quantile_1d(mu, nu);
    require(mu.size() == nu.size() && mu.is_uniform() && nu.is_uniform(), ErrorKind::UnsupportedTransport,
            "d >= 2 requires uniform weights on supports of equal size");
    return detail::w2_assignment(mu, nu);
}

} // namespace mflsi
