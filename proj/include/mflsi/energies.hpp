#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "mflsi/error.hpp"
#include "mflsi/measures.hpp"

namespace mflsi {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;

/// Mean-field energy F on probability measures.
///
/// The flat derivative is the natural closed-form representative, without the
/// mean-zero normalization constant. Constants cancel in D_m F and in every
/// Gibbs density built from it.
class MeanFieldEnergy {
public:
    virtual ~MeanFieldEnergy() = default;

    virtual std::string name() const = 0;

    /// F(mu).
    virtual double eval(const DiscreteMeasure& mu) const = 0;
    /// dF/dm(mu, x).
    virtual double flat_derivative(const DiscreteMeasure& mu, const VecRef& x) const = 0;
    /// D_m F(mu, x) = grad_x dF/dm(mu, x).
    virtual Vec intrinsic_grad(const DiscreteMeasure& mu, const VecRef& x) const = 0;
    /// D_m^2 F(mu, x, x') = grad_{x,x'} d^2F/dm^2(mu, x, x'); rows index x, columns x'.
    virtual Mat intrinsic_hess(const DiscreteMeasure& mu, const VecRef& x, const VecRef& xp) const = 0;
    /// grad_x D_m F(mu, x) at fixed mu.
    virtual Mat intrinsic_grad_jacobian(const DiscreteMeasure& mu, const VecRef& x) const = 0;

    /// Semi-convexity modulus along mixtures (penalty lambda/2 * W2^2).
    virtual double declared_lambda() const = 0;
    /// Uniform bound on the operator norm of D_m^2 F.
    virtual double declared_Mmm() const = 0;

    /// Required state-space dimension, or 0 when any d is accepted.
    virtual int required_dim() const { return 0; }

protected:
    void check_dim(int d) const {
        const int req = required_dim();
        require(req == 0 || req == d, ErrorKind::DimensionMismatch,
                name() + " expects d = " + std::to_string(req) + ", got " + std::to_string(d));
    }
};

using EnergyPtr = std::shared_ptr<const MeanFieldEnergy>;

/// F(mu) = 1/2 int |x|^2 dmu - a/2 |int x dmu|^2.
class QuadraticMeanEnergy final : public MeanFieldEnergy {
public:
    explicit QuadraticMeanEnergy(double a) : a_(a) {
        require(std::isfinite(a) && a >= 0.0, ErrorKind::InvalidArgument, "attraction a must be >= 0");
    }

    double a() const { return a_; }
    std::string name() const override { return "quadratic"; }

    double eval(const DiscreteMeasure& mu) const override {
        const double second = mu.integrate([](const auto& x) { return x.squaredNorm(); });
        return 0.5 * second - 0.5 * a_ * mu.mean().squaredNorm();
    }

    double flat_derivative(const DiscreteMeasure& mu, const VecRef& x) const override {
        return 0.5 * x.squaredNorm() - a_ * x.dot(mu.mean());
    }

    Vec intrinsic_grad(const DiscreteMeasure& mu, const VecRef& x) const override { return x - a_ * mu.mean(); }

    // The second flat derivative is -a x.x'; only |D_m^2 F| = a enters the bounds.
    Mat intrinsic_hess(const DiscreteMeasure& mu, const VecRef& x, const VecRef&) const override {
        (void)mu;
        return -a_ * Mat::Identity(x.size(), x.size());
    }

    Mat intrinsic_grad_jacobian(const DiscreteMeasure&, const VecRef& x) const override {
        return Mat::Identity(x.size(), x.size());
    }

    double declared_lambda() const override { return a_; }
    double declared_Mmm() const override { return a_; }

private:
    double a_;
};

struct KernelParams {
    double eta = 1.0;     // V2(x) = eta |x|^2 / 2
    double v1_sup = 0.0;  // V1(x) = v1_sup * cos(v1_freq * sum_k x_k)
    double v1_freq = 1.0;
    double L = 0.0;       // W1(z) = L exp(-|z|^2)
    double alpha = 0.0;   // W2(z) = alpha |z|^2
};

/// F(mu) = int V dmu + 1/2 iint W(x - y) dmu dmu with V = V1 + V2, W = W1 + W2.
/// The diagonal (self-interaction) term is included, so U_N = N F(mu_x) holds exactly.
class PairwiseKernelEnergy final : public MeanFieldEnergy {
public:
    explicit PairwiseKernelEnergy(KernelParams p) : p_(p) {
        require(p.eta > 0.0 && p.v1_sup >= 0.0 && p.L >= 0.0 && p.alpha >= 0.0 &&
                    std::isfinite(p.eta + p.v1_sup + p.v1_freq + p.L + p.alpha),
                ErrorKind::InvalidArgument, "kernel parameters out of range");
    }

    const KernelParams& params() const { return p_; }
    std::string name() const override { return "kernel"; }

    double confinement(const VecRef& x) const {
        return 0.5 * p_.eta * x.squaredNorm() + p_.v1_sup * std::cos(p_.v1_freq * x.sum());
    }
    Vec confinement_grad(const VecRef& x) const {
        return p_.eta * x - Vec::Constant(x.size(), p_.v1_sup * p_.v1_freq * std::sin(p_.v1_freq * x.sum()));
    }
    Mat confinement_hess(const VecRef& x) const {
        const auto d = x.size();
        return p_.eta * Mat::Identity(d, d) -
               p_.v1_sup * p_.v1_freq * p_.v1_freq * std::cos(p_.v1_freq * x.sum()) * Mat::Ones(d, d);
    }

    double kernel(const VecRef& z) const {
        const double r2 = z.squaredNorm();
        return p_.L * std::exp(-r2) + p_.alpha * r2;
    }
    Vec kernel_grad(const VecRef& z) const { return (-2.0 * p_.L * std::exp(-z.squaredNorm()) + 2.0 * p_.alpha) * z; }
    Mat kernel_hess(const VecRef& z) const {
        const auto d = z.size();
        const Mat id = Mat::Identity(d, d);
        return p_.L * std::exp(-z.squaredNorm()) * (4.0 * z * z.transpose() - 2.0 * id) + 2.0 * p_.alpha * id;
    }

    double eval(const DiscreteMeasure& mu) const override {
        double acc = mu.integrate([&](const auto& x) { return confinement(x); });
        for (int i = 0; i < mu.size(); ++i)
            for (int j = 0; j < mu.size(); ++j)
                acc += 0.5 * mu.weight(i) * mu.weight(j) * kernel(mu.point(i) - mu.point(j));
        return acc;
    }

    double flat_derivative(const DiscreteMeasure& mu, const VecRef& x) const override {
        return confinement(x) + mu.integrate([&](const auto& y) { return kernel(x - y); });
    }

    Vec intrinsic_grad(const DiscreteMeasure& mu, const VecRef& x) const override {
        Vec g = confinement_grad(x);
        for (int j = 0; j < mu.size(); ++j) g += mu.weight(j) * kernel_grad(x - mu.point(j));
        return g;
    }

    Mat intrinsic_hess(const DiscreteMeasure&, const VecRef& x, const VecRef& xp) const override {
        return -kernel_hess(x - xp);
    }

    Mat intrinsic_grad_jacobian(const DiscreteMeasure& mu, const VecRef& x) const override {
        Mat h = confinement_hess(x);
        for (int j = 0; j < mu.size(); ++j) h += mu.weight(j) * kernel_hess(x - mu.point(j));
        return h;
    }

    // Mercer part is flat-convex; the quadratic kernel contributes -alpha |mean|^2.
    double declared_lambda() const override { return 2.0 * p_.alpha; }
    double declared_Mmm() const override { return 2.0 * p_.L * (1.0 + 2.0 * std::exp(-1.0)) + 2.0 * p_.alpha; }

private:
    KernelParams p_;
};

/// Feature map phi: R^d -> R^k with a known Lipschitz constant.
struct FeatureMap {
    int in_dim = 1;
    int out_dim = 1;
    double lipschitz = 1.0;
    std::function<Vec(const VecRef&)> value;
    /// k x d Jacobian.
    std::function<Mat(const VecRef&)> jacobian;
    /// sum_l g_l hess(phi_l)(x), a d x d matrix.
    std::function<Mat(const VecRef& x, const VecRef& g)> hessian_contract;

    static FeatureMap identity(int d) {
        FeatureMap f;
        f.in_dim = f.out_dim = d;
        f.lipschitz = 1.0;
        f.value = [](const VecRef& x) { return Vec(x); };
        f.jacobian = [d](const VecRef&) { return Mat(Mat::Identity(d, d)); };
        f.hessian_contract = [d](const VecRef&, const VecRef&) { return Mat(Mat::Zero(d, d)); };
        return f;
    }

    /// Componentwise tanh.
    static FeatureMap tanh(int d) {
        FeatureMap f;
        f.in_dim = f.out_dim = d;
        f.lipschitz = 1.0;
        f.value = [](const VecRef& x) { return Vec(x.array().tanh()); };
        f.jacobian = [](const VecRef& x) {
            const Eigen::ArrayXd t = x.array().tanh();
            return Mat((1.0 - t * t).matrix().asDiagonal());
        };
        f.hessian_contract = [](const VecRef& x, const VecRef& g) {
            const Eigen::ArrayXd t = x.array().tanh();
            return Mat((g.array() * (-2.0 * t * (1.0 - t * t))).matrix().asDiagonal());
        };
        return f;
    }
};

/// Outer function R: R^k -> R. `semiconvexity` is the alpha_R with
/// R + alpha_R |.|^2 convex; `hessian_bound` bounds |hess R| on the hull of phi.
struct OuterFunction {
    double semiconvexity = 0.0;
    double hessian_bound = 0.0;
    std::function<double(const VecRef&)> value;
    std::function<Vec(const VecRef&)> gradient;
    std::function<Mat(const VecRef&)> hessian;

    /// R(y) = coef/2 |y|^2.
    static OuterFunction quadratic(double coef) {
        OuterFunction r;
        r.semiconvexity = std::max(0.0, -0.5 * coef);
        r.hessian_bound = std::abs(coef);
        r.value = [coef](const VecRef& y) { return 0.5 * coef * y.squaredNorm(); };
        r.gradient = [coef](const VecRef& y) { return Vec(coef * y); };
        r.hessian = [coef](const VecRef& y) { return Mat(coef * Mat::Identity(y.size(), y.size())); };
        return r;
    }

    static OuterFunction zero() { return quadratic(0.0); }
};

/// F(mu) = F0(mu) + R(int phi dmu) with F0 flat-convex.
class ParametrizedEnergy final : public MeanFieldEnergy {
public:
    ParametrizedEnergy(EnergyPtr base, FeatureMap phi, OuterFunction outer)
        : base_(std::move(base)), phi_(std::move(phi)), outer_(std::move(outer)) {
        require(base_ != nullptr, ErrorKind::InvalidArgument, "missing base energy");
        require(base_->declared_lambda() == 0.0, ErrorKind::InvalidArgument, "base energy must be flat-convex");
        require(phi_.value && phi_.jacobian && phi_.hessian_contract, ErrorKind::InvalidArgument,
                "incomplete feature map");
        require(outer_.value && outer_.gradient && outer_.hessian, ErrorKind::InvalidArgument,
                "incomplete outer function");
        require(phi_.lipschitz >= 0.0 && outer_.semiconvexity >= 0.0, ErrorKind::InvalidArgument,
                "negative Lipschitz or semi-convexity constant");
    }

    std::string name() const override { return "parametrized"; }
    const MeanFieldEnergy& base() const { return *base_; }
    const FeatureMap& feature_map() const { return phi_; }
    const OuterFunction& outer() const { return outer_; }
    int required_dim() const override { return phi_.in_dim; }

    Vec feature_mean(const DiscreteMeasure& mu) const {
        check_dim(mu.dim());
        Vec acc = Vec::Zero(phi_.out_dim);
        for (int i = 0; i < mu.size(); ++i) acc += mu.weight(i) * phi_.value(mu.point(i));
        return acc;
    }

    /// Cost C(nu, mu) = alpha_R |int phi d(nu - mu)|^2.
    double cost(const DiscreteMeasure& nu, const DiscreteMeasure& mu) const {
        return outer_.semiconvexity * (feature_mean(nu) - feature_mean(mu)).squaredNorm();
    }

    double eval(const DiscreteMeasure& mu) const override {
        return base_->eval(mu) + outer_.value(feature_mean(mu));
    }

    double flat_derivative(const DiscreteMeasure& mu, const VecRef& x) const override {
        return base_->flat_derivative(mu, x) + outer_.gradient(feature_mean(mu)).dot(phi_.value(x));
    }

    Vec intrinsic_grad(const DiscreteMeasure& mu, const VecRef& x) const override {
        return base_->intrinsic_grad(mu, x) + phi_.jacobian(x).transpose() * outer_.gradient(feature_mean(mu));
    }

    Mat intrinsic_hess(const DiscreteMeasure& mu, const VecRef& x, const VecRef& xp) const override {
        return base_->intrinsic_hess(mu, x, xp) +
               phi_.jacobian(x).transpose() * outer_.hessian(feature_mean(mu)) * phi_.jacobian(xp);
    }

    Mat intrinsic_grad_jacobian(const DiscreteMeasure& mu, const VecRef& x) const override {
        return base_->intrinsic_grad_jacobian(mu, x) + phi_.hessian_contract(x, outer_.gradient(feature_mean(mu)));
    }

    double declared_lambda() const override {
        return 2.0 * outer_.semiconvexity * phi_.lipschitz * phi_.lipschitz;
    }
    double declared_Mmm() const override {
        return base_->declared_Mmm() + outer_.hessian_bound * phi_.lipschitz * phi_.lipschitz;
    }

private:
    EnergyPtr base_;
    FeatureMap phi_;
    OuterFunction outer_;
};

/// The quadratic-mean energy written as confinement |x|^2/2 plus R(y) = -a/2 |y|^2 of phi = id.
inline std::shared_ptr<ParametrizedEnergy> quadratic_as_parametrized(double a, int d = 1) {
    auto base = std::make_shared<PairwiseKernelEnergy>(KernelParams{});
    return std::make_shared<ParametrizedEnergy>(base, FeatureMap::identity(d), OuterFunction::quadratic(-a));
}

/// N-particle system with potential U_N(x) = N F(mu_x) and Gibbs target exp(-U_N)/Z_N.
class ParticleSystem {
public:
    ParticleSystem(EnergyPtr energy, int n_particles, int dim)
        : energy_(std::move(energy)), n_(n_particles), d_(dim) {
        require(energy_ != nullptr, ErrorKind::InvalidArgument, "missing energy");
        require(n_ >= 1 && d_ >= 1, ErrorKind::InvalidArgument, "N and d must be positive");
        const int req = energy_->required_dim();
        require(req == 0 || req == d_, ErrorKind::DimensionMismatch, "energy dimension differs from system d");
    }

    const MeanFieldEnergy& energy() const { return *energy_; }
    const EnergyPtr& energy_ptr() const { return energy_; }
    int n() const { return n_; }
    int d() const { return d_; }
    int flat_size() const { return n_ * d_; }

    double potential(const Configuration& x) const {
        check_shape(x);
        return static_cast<double>(n_) * energy_->eval(empirical(x));
    }

    /// Row i is D_m F(mu_x, x_i).
    Configuration gradient(const Configuration& x) const {
        check_shape(x);
        const auto mu = empirical(x);
        Configuration g(n_, d_);
        for (int i = 0; i < n_; ++i) g.row(i) = energy_->intrinsic_grad(mu, x.row(i).transpose()).transpose();
        return g;
    }

    /// Nd x Nd Hessian, block (i,j) = D_m^2 F(mu_x, x_i, x_j)/N + 1{i=j} grad_x D_m F(mu_x, x_i).
    Mat hessian(const Configuration& x) const {
        check_shape(x);
        const auto mu = empirical(x);
        Mat h(flat_size(), flat_size());
        for (int i = 0; i < n_; ++i) {
            for (int j = 0; j < n_; ++j) {
                Mat block = energy_->intrinsic_hess(mu, x.row(i).transpose(), x.row(j).transpose()) / n_;
                if (i == j) block += energy_->intrinsic_grad_jacobian(mu, x.row(i).transpose());
                h.block(i * d_, j * d_, d_, d_) = block;
            }
        }
        return 0.5 * (h + h.transpose());
    }

    /// Block matrix K with K_ij = D_m^2 F(mu_x, x_i, x_j).
    Mat interaction_matrix(const Configuration& x) const {
        check_shape(x);
        const auto mu = empirical(x);
        Mat k(flat_size(), flat_size());
        for (int i = 0; i < n_; ++i)
            for (int j = 0; j < n_; ++j)
                k.block(i * d_, j * d_, d_, d_) =
                    energy_->intrinsic_hess(mu, x.row(i).transpose(), x.row(j).transpose());
        return 0.5 * (k + k.transpose());
    }

    void check_shape(const Configuration& x) const {
        require(x.rows() == n_ && x.cols() == d_, ErrorKind::DimensionMismatch,
                "configuration shape differs from (N, d)");
    }

private:
    EnergyPtr energy_;
    int n_;
    int d_;
};

inline Vec flatten(const Configuration& x) {
    Vec v(x.size());
    for (Eigen::Index i = 0; i < x.rows(); ++i) v.segment(i * x.cols(), x.cols()) = x.row(i).transpose();
    return v;
}

inline Configuration unflatten(const VecRef& v, int n, int d) {
    Configuration x(n, d);
    for (int i = 0; i < n; ++i) x.row(i) = v.segment(i * d, d).transpose();
    return x;
}

} // namespace mflsi
