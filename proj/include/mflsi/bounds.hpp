#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mflsi/energies.hpp"
#include "mflsi/error.hpp"
#include "mflsi/measures.hpp"

namespace mflsi {

/// Inputs of the uniform Poincaré bound rho_N - lambda - Mmm/N.
struct PoincareInputs {
    double rho_N = 1.0;   // conditional Poincaré constant of one particle
    double lambda = 0.0;  // semi-convexity modulus
    double Mmm = 0.0;     // bound on |D_m^2 F|
    int N = 1;
};

/// Inputs of the defective log-Sobolev constants.
struct LsiInputs {
    double rho = 1.0;           // LSI constant of every proximal Gibbs measure
    double lambda_prime = 0.0;  // N-scaled W2 coefficient in the cost bound
    double alpha_N = 0.0;       // additive defect in the cost bound
    double Mmm = 0.0;
    double epsilon = 0.5;
    int N = 1;
    int d = 1;
};

struct ConstantsFlags {
    bool poincare_positive = false;
    bool cost_condition = false;   // 4 lambda' < rho
    bool n_above_n0 = false;       // N > N0
    bool beta_in_unit = false;     // beta_N in (0,1)
    bool defective_valid = false;  // cost_condition && n_above_n0
    bool corollary_valid = false;  // defective_valid && poincare_positive
};

struct ConstantsReport {
    double poincare_bound = std::numeric_limits<double>::quiet_NaN();
    double N0 = std::numeric_limits<double>::quiet_NaN();
    double lambda_tilde = std::numeric_limits<double>::quiet_NaN();
    double beta_N = std::numeric_limits<double>::quiet_NaN();
    double delta_N = std::numeric_limits<double>::quiet_NaN();
    double rho_prime_star = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> rho_star;
    ConstantsFlags flags;
};

inline void validate(const PoincareInputs& in) {
    require(std::isfinite(in.rho_N) && std::isfinite(in.lambda) && std::isfinite(in.Mmm) && in.N >= 1 &&
                in.rho_N > 0.0 && in.lambda >= 0.0 && in.Mmm >= 0.0,
            ErrorKind::InvalidArgument, "invalid Poincaré inputs");
}

inline void validate(const LsiInputs& in) {
    require(std::isfinite(in.rho) && std::isfinite(in.lambda_prime) && std::isfinite(in.alpha_N) &&
                std::isfinite(in.Mmm) && in.rho > 0.0 && in.lambda_prime >= 0.0 && in.alpha_N >= 0.0 &&
                in.Mmm >= 0.0 && in.N >= 1 && in.d >= 1,
            ErrorKind::InvalidArgument, "invalid LSI inputs");
    require(in.epsilon > 0.0 && in.epsilon < 1.0, ErrorKind::InvalidArgument, "epsilon must lie in (0,1)");
}

/// rho_N - lambda - Mmm/N; may be <= 0, in which case no inequality follows.
inline double poincare_constant(const PoincareInputs& in) {
    validate(in);
    return in.rho_N - in.lambda - in.Mmm / static_cast<double>(in.N);
}

namespace detail {
// 4 + 3 M (1/eps - 1) / (2 rho (1 - eps)), shared by N0 and lambda_tilde.
inline double interaction_factor(const LsiInputs& in) {
    return 4.0 + 3.0 * in.Mmm * (1.0 / in.epsilon - 1.0) / (2.0 * in.rho * (1.0 - in.epsilon));
}
} // namespace detail

/// Defective LSI constants (rho'_{N,*}, delta_N) and the auxiliary N0,
/// lambda_tilde_N, beta_N. Never throws on an inapplicable regime: flags
/// record where the statement stops applying. When 4 lambda' >= rho only N0
/// (= +inf) and flags are filled.
inline ConstantsReport defective_lsi_constants(const LsiInputs& in) {
    validate(in);
    ConstantsReport r;
    const double k = detail::interaction_factor(in);
    r.flags.cost_condition = 4.0 * in.lambda_prime < in.rho;
    if (!r.flags.cost_condition) {
        r.N0 = std::numeric_limits<double>::infinity();
        return r;
    }
    r.N0 = 4.0 * in.Mmm / (in.rho - 4.0 * in.lambda_prime) * k;
    r.lambda_tilde = in.lambda_prime + in.Mmm / static_cast<double>(in.N) * k;
    const double ratio = 2.0 * r.lambda_tilde / in.rho;
    r.beta_N = ratio / (1.0 - ratio);
    r.delta_N = 4.0 * in.rho * (1.0 - in.epsilon) *
                (2.0 * in.alpha_N +
                 in.Mmm * in.d / in.rho *
                     (2.5 + 3.0 * in.Mmm * (1.0 / in.epsilon - 1.0) / (4.0 * in.rho * (1.0 - in.epsilon))));
    r.rho_prime_star = 2.0 * (1.0 - in.epsilon) * (1.0 - r.beta_N) * in.rho;
    r.flags.n_above_n0 = static_cast<double>(in.N) > r.N0;
    r.flags.beta_in_unit = r.beta_N >= 0.0 && r.beta_N < 1.0 && ratio < 1.0;
    r.flags.defective_valid = r.flags.cost_condition && r.flags.n_above_n0;
    return r;
}

/// Throws defective-invalid unless the defective inequality applies.
inline void ensure_defective_valid(const ConstantsReport& r) {
    require(r.flags.cost_condition, ErrorKind::DefectiveInvalid, "4 lambda' >= rho");
    require(r.flags.n_above_n0, ErrorKind::DefectiveInvalid, "N <= N0");
}

/// rho_{N,*} = rho'_{N,*} / (1 + delta_N / (4 poincare_bound)).
inline double tight_lsi_constant(const ConstantsReport& r, double poincare_bound) {
    require(r.flags.defective_valid, ErrorKind::CorollaryInvalid, "defective LSI does not apply");
    require(poincare_bound > 0.0, ErrorKind::CorollaryInvalid, "Poincaré bound is not positive");
    return r.rho_prime_star / (1.0 + r.delta_N / (4.0 * poincare_bound));
}

/// Full report: Poincaré bound, defective constants and, when both parts
/// apply, the tight LSI constant.
inline ConstantsReport constants_report(const PoincareInputs& pin, const LsiInputs& lin) {
    ConstantsReport r = defective_lsi_constants(lin);
    r.poincare_bound = poincare_constant(pin);
    r.flags.poincare_positive = r.poincare_bound > 0.0;
    r.flags.corollary_valid = r.flags.defective_valid && r.flags.poincare_positive;
    if (r.flags.corollary_valid) r.rho_star = tight_lsi_constant(r, r.poincare_bound);
    return r;
}

/// The quadratic-mean example with its exact reference values.
struct QuadraticExample {
    PoincareInputs inputs;
    double theorem_bound = 0.0;   // 1 - a (1 + 2/N)
    double exact_poincare = 0.0;  // 1 - a, smallest eigenvalue of the precision
};

inline QuadraticExample quadratic_example_constants(double a, int N) {
    require(a < 1.0, ErrorKind::GibbsUndefined, "a >= 1: exp(-U_N) is not integrable");
    require(a >= 0.0 && N >= 1 && static_cast<double>(N) > a, ErrorKind::InvalidArgument,
            "need 0 <= a < 1 and N > a");
    QuadraticExample ex;
    ex.inputs = {1.0 - a / N, a, a, N};
    ex.theorem_bound = poincare_constant(ex.inputs);
    ex.exact_poincare = 1.0 - a;
    return ex;
}

/// Constants of the Gaussian-repulsion / quadratic-attraction kernel example.
struct KernelExample {
    double Mmm = 0.0;
    double rho = 0.0;    // LSI constant of the proximal Gibbs measures
    double rho_N = 0.0;  // conditional Poincaré constant
    bool condition_holds = false;         // 4 alpha < rho
    double beta_max = 0.0;                // inverse-temperature threshold (+inf when alpha = 0)
    bool beta_max_defined = false;        // requires 4 alpha < eta
    double lambda = 0.0;                  // declared semi-convexity modulus 2 alpha
    double alpha_R = 0.0;                 // cost coefficient, phi = id
};

inline KernelExample kernel_example_constants(double L, double alpha, double eta, double v1_sup) {
    require(L >= 0.0 && alpha >= 0.0 && eta > 0.0 && v1_sup >= 0.0, ErrorKind::InvalidArgument,
            "kernel parameters out of range");
    KernelExample ex;
    ex.Mmm = 2.0 * L * (1.0 + 2.0 * std::exp(-1.0)) + 2.0 * alpha;
    ex.rho = eta * std::exp(-v1_sup - L);
    ex.rho_N = ex.rho;
    ex.condition_holds = 4.0 * alpha < ex.rho;
    ex.lambda = 2.0 * alpha;
    ex.alpha_R = alpha;
    if (alpha == 0.0) {
        ex.beta_max = std::numeric_limits<double>::infinity();
        ex.beta_max_defined = true;
    } else if (4.0 * alpha < eta) {
        const double spread = v1_sup + L;
        ex.beta_max = spread > 0.0 ? (std::log(eta) - std::log(4.0 * alpha)) / spread
                                   : std::numeric_limits<double>::infinity();
        ex.beta_max_defined = true;
    } else {
        ex.beta_max = std::numeric_limits<double>::quiet_NaN();
    }
    return ex;
}

struct CostBound {
    double lambda_prime = 0.0;
    double alpha_N = 0.0;
};

/// lambda' = alpha_R (1 + eps) Lip(phi)^2, alpha_N = alpha_R (1 + 1/eps) Var(phi).
inline CostBound parametrized_cost_bound(const ParametrizedEnergy& energy, double var_phi, double epsilon) {
    require(var_phi >= 0.0 && std::isfinite(var_phi), ErrorKind::InvalidArgument, "variance must be >= 0");
    require(epsilon > 0.0 && epsilon < 1.0, ErrorKind::InvalidArgument, "epsilon must lie in (0,1)");
    const double a = energy.outer().semiconvexity;
    const double lip = energy.feature_map().lipschitz;
    return {a * (1.0 + epsilon) * lip * lip, a * (1.0 + 1.0 / epsilon) * var_phi};
}

inline std::vector<double> default_t_grid() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}; }

struct DeficitResult {
    double worst_deficit = -std::numeric_limits<double>::infinity();
    double worst_t = 0.0;
    bool pass = false;
};

inline constexpr double kDeficitTolerance = 1e-9;

namespace detail {
template <class Penalty>
DeficitResult convexity_deficit(const MeanFieldEnergy& energy, const DiscreteMeasure& mu,
                                const DiscreteMeasure& nu, const std::vector<double>& t_grid,
                                Penalty&& penalty) {
    const double f_mu = energy.eval(mu);
    const double f_nu = energy.eval(nu);
    DeficitResult res;
    for (double t : t_grid) {
        const double gap =
            energy.eval(mix(mu, nu, t)) - t * f_mu - (1.0 - t) * f_nu - t * (1.0 - t) * penalty;
        if (gap > res.worst_deficit) {
            res.worst_deficit = gap;
            res.worst_t = t;
        }
    }
    res.pass = res.worst_deficit <= kDeficitTolerance;
    return res;
}
} // namespace detail

/// Largest violation of F(t mu + (1-t) nu) <= t F(mu) + (1-t) F(nu) + t(1-t) lambda/2 W2^2(nu, mu).
/// `lambda` defaults to the energy's declared modulus.
inline DeficitResult check_semi_convexity(const MeanFieldEnergy& energy, const DiscreteMeasure& mu,
                                          const DiscreteMeasure& nu,
                                          const std::vector<double>& t_grid = default_t_grid(),
                                          std::optional<double> lambda = std::nullopt) {
    const double lam = lambda.value_or(energy.declared_lambda());
    return detail::convexity_deficit(energy, mu, nu, t_grid, 0.5 * lam * w2_squared(nu, mu));
}

/// Same as check_semi_convexity with the penalty C(nu, mu) = alpha_R |int phi d(nu - mu)|^2.
inline DeficitResult check_cost_convexity(const ParametrizedEnergy& energy, const DiscreteMeasure& mu,
                                          const DiscreteMeasure& nu,
                                          const std::vector<double>& t_grid = default_t_grid()) {
    require(mu.dim() == nu.dim(), ErrorKind::DimensionMismatch, "measures of different dimension");
    return detail::convexity_deficit(energy, mu, nu, t_grid, energy.cost(nu, mu));
}

inline double min_eigenvalue(const Eigen::MatrixXd& sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

struct HessianBlockResult {
    double min_ratio = std::numeric_limits<double>::infinity();  // min over configs of lambda_min(K)/N
    bool pass = false;
};

/// Lower bound on the interaction quadratic form sum_ij v_i.D_m^2 F(mu_x,x_i,x_j) v_j.
inline HessianBlockResult hessian_block_bound(const MeanFieldEnergy& energy, const std::vector<Configuration>& configs) {
    HessianBlockResult res;
    for (const auto& x : configs) {
        require(x.allFinite(), ErrorKind::InvalidArgument, "non-finite configuration");
        ParticleSystem sys(std::shared_ptr<const MeanFieldEnergy>(&energy, [](const MeanFieldEnergy*) {}),
                           static_cast<int>(x.rows()), static_cast<int>(x.cols()));
        require(sys.flat_size() <= 4096, ErrorKind::InvalidArgument, "system too large for dense eigensolve");
        res.min_ratio = std::min(res.min_ratio, min_eigenvalue(sys.interaction_matrix(x)) / x.rows());
    }
    res.pass = res.min_ratio >= -energy.declared_lambda() - kDeficitTolerance;
    return res;
}

} // namespace mflsi
