#pragma once

// NLARX factor node  z_t ~ N(f(θ, z_{t-1}, η, u_t), V),  V = diag(1/γ, ε)
// and the measurement node  y_t ~ N(s' z_t, 1/ξ).
//
// Every expectation of the nonlinear regressor goes through one affine
// surrogate, built around the mean z̄ of q(z_{t-1}):
//
//   φ(z) ≈ φ̄ + J (z - z̄),   g(θ, z) ≈ θ' (φ̄ + J (z - z̄))
//
// with φ = (x, x³, x_prev) in NLARX mode and φ = (x, x_prev) in LARX mode
// (θ2 removed). The mode is read off the dimension of q(θ). Because the
// expansion point only depends on q(z_{t-1}), which is fixed within a time
// step, all messages below are exact coordinate updates of one surrogate
// free energy.

#include "fesid/beliefs.hpp"
#include "fesid/duffing.hpp"

#include <stdexcept>

namespace fesid {

enum class ModelMode { nlarx, larx };

inline Eigen::Index theta_dim(ModelMode mode)
{
    return mode == ModelMode::nlarx ? 3 : 2;
}

inline ModelMode mode_for_theta_dim(Eigen::Index dim)
{
    if (dim == 3) return ModelMode::nlarx;
    if (dim == 2) return ModelMode::larx;
    throw std::invalid_argument("q(theta) must have dimension 3 (nlarx) or 2 (larx)");
}

/// Embeds a LARX coefficient vector (θ1, θ3) into the full (θ1, 0, θ3).
inline std::array<double, 3> full_theta(const Vector& theta)
{
    if (mode_for_theta_dim(theta.size()) == ModelMode::nlarx) return {theta[0], theta[1], theta[2]};
    return {theta[0], 0.0, theta[1]};
}

struct NodeConfig {
    double epsilon = 1e-8;
    double u = 0.0; ///< input paired with the current sample
};

struct LinearizedG {
    double value = 0.0;
    std::array<double, 2> grad_z{};
    Vector grad_theta; ///< regressor φ at the expansion point
};

/// Regressor φ(z̄) for the given parameter dimension.
inline Vector regressor(const Vector& z_mean, Eigen::Index dim)
{
    const double x = z_mean[0];
    Vector phi(dim);
    if (mode_for_theta_dim(dim) == ModelMode::nlarx)
        phi << x, x * x * x, z_mean[1];
    else
        phi << x, z_mean[1];
    return phi;
}

/// ∂φ/∂z at z̄ (dim × 2).
inline Matrix regressor_jacobian(const Vector& z_mean, Eigen::Index dim)
{
    Matrix jac = Matrix::Zero(dim, 2);
    jac(0, 0) = 1.0;
    jac(dim - 1, 1) = 1.0;
    if (mode_for_theta_dim(dim) == ModelMode::nlarx) jac(1, 0) = 3.0 * z_mean[0] * z_mean[0];
    return jac;
}

inline LinearizedG linearize_g(const Vector& theta_mean, const Vector& z_mean)
{
    detail::require(z_mean.size() == 2, "linearize_g: state must be 2-dimensional");
    const Eigen::Index dim = theta_mean.size();
    LinearizedG lin;
    lin.grad_theta = regressor(z_mean, dim);
    lin.value = theta_mean.dot(lin.grad_theta);
    const Vector gz = regressor_jacobian(z_mean, dim).transpose() * theta_mean;
    lin.grad_z = {gz[0], gz[1]};
    return lin;
}

namespace detail {

struct StateMoments {
    Vector mean;
    Matrix cov;
};

inline StateMoments state_moments(const GaussianBelief& q, const char* what)
{
    if (q.dim() != 2) throw std::invalid_argument(std::string(what) + " must be 2-dimensional");
    try {
        auto m = gaussian_moments(q);
        return {std::move(m.mean), std::move(m.covariance)};
    } catch (const InferenceError&) {
        throw InferenceError(std::string(what) + " is improper");
    }
}

inline double scalar_mean(const GaussianBelief& q)
{
    detail::require(q.dim() == 1, "q(eta) must be 1-dimensional");
    return gaussian_moments(q).mean[0];
}

inline double scalar_var(const GaussianBelief& q)
{
    return gaussian_moments(q).covariance(0, 0);
}

} // namespace detail

/// Message 6: ν(θ) ∝ exp E[log N(f, V)] over q(z_t) q(z_{t-1}) q(η) q(γ).
/// `theta_dim` selects NLARX (3) or LARX (2). May be rank deficient.
inline GaussianBelief msg_theta(const GaussianBelief& q_z, const GaussianBelief& q_zprev,
                                const GaussianBelief& q_eta, const GammaBelief& q_gamma,
                                const NodeConfig& cfg, Eigen::Index theta_dim = 3)
{
    const auto z = detail::state_moments(q_z, "q(z_t)");
    const auto zp = detail::state_moments(q_zprev, "q(z_{t-1})");
    const double gamma = q_gamma.mean();
    const double eta = detail::scalar_mean(q_eta);

    const Vector phi = regressor(zp.mean, theta_dim);
    const Matrix jac = regressor_jacobian(zp.mean, theta_dim);
    const Matrix phi_outer = phi * phi.transpose() + jac * zp.cov * jac.transpose();

    const Matrix precision = gamma * phi_outer;
    const Vector potential = gamma * phi * (z.mean[0] - eta * cfg.u);
    return GaussianBelief::from_information(potential, precision);
}

/// Message 7: ν(η).
inline GaussianBelief msg_eta(const GaussianBelief& q_z, const GaussianBelief& q_zprev,
                              const GaussianBelief& q_theta, const GammaBelief& q_gamma,
                              const NodeConfig& cfg)
{
    const auto z = detail::state_moments(q_z, "q(z_t)");
    const auto zp = detail::state_moments(q_zprev, "q(z_{t-1})");
    const double gamma = q_gamma.mean();
    const Vector theta = gaussian_moments(q_theta).mean;
    const double g = theta.dot(regressor(zp.mean, theta.size()));

    Matrix precision(1, 1);
    precision(0, 0) = gamma * cfg.u * cfg.u;
    Vector potential(1);
    potential[0] = gamma * cfg.u * (z.mean[0] - g);
    return GaussianBelief::from_information(potential, precision);
}

/// E[(x_{t+1} - g(θ, z_{t-1}) - η u)^2] under the mean-field beliefs and the
/// affine surrogate.
inline double expected_squared_residual(const GaussianBelief& q_z, const GaussianBelief& q_zprev,
                                        const GaussianBelief& q_theta, const GaussianBelief& q_eta,
                                        const NodeConfig& cfg)
{
    const auto z = detail::state_moments(q_z, "q(z_t)");
    const auto zp = detail::state_moments(q_zprev, "q(z_{t-1})");
    const auto th = gaussian_moments(q_theta);
    const double eta = detail::scalar_mean(q_eta);
    const double eta_var = detail::scalar_var(q_eta);
    const Eigen::Index dim = th.mean.size();

    const Vector phi = regressor(zp.mean, dim);
    const Matrix jac = regressor_jacobian(zp.mean, dim);
    const Vector grad_z = jac.transpose() * th.mean;
    const Matrix phi_cov = jac * zp.cov * jac.transpose();

    const double resid = z.mean[0] - th.mean.dot(phi) - eta * cfg.u;
    const double total = resid * resid + z.cov(0, 0) + grad_z.dot(zp.cov * grad_z)
                         + phi.dot(th.covariance * phi) + (th.covariance * phi_cov).trace()
                         + cfg.u * cfg.u * eta_var;
    if (total < 0.0) throw std::logic_error("negative expected squared residual");
    return total;
}

/// Message 8: ν(γ) = Gamma(3/2, E[residual²]/2).
inline GammaBelief msg_gamma(const GaussianBelief& q_z, const GaussianBelief& q_zprev,
                             const GaussianBelief& q_theta, const GaussianBelief& q_eta,
                             const NodeConfig& cfg)
{
    return {1.5, 0.5 * expected_squared_residual(q_z, q_zprev, q_theta, q_eta, cfg)};
}

/// Message 9: ν(z_t) with mean S z̄ + s (ḡ + η̄ u) and precision diag(E[γ], 1/ε).
inline GaussianBelief msg_forward_state(const GaussianBelief& q_zprev, const GaussianBelief& q_theta,
                                        const GaussianBelief& q_eta, const GammaBelief& q_gamma,
                                        const NodeConfig& cfg)
{
    detail::require(cfg.epsilon > 0.0, "epsilon must be positive");
    const auto zp = detail::state_moments(q_zprev, "q(z_{t-1})");
    const Vector theta = gaussian_moments(q_theta).mean;
    const double eta = detail::scalar_mean(q_eta);

    Vector mean(2);
    mean << theta.dot(regressor(zp.mean, theta.size())) + eta * cfg.u, zp.mean[0];
    Matrix precision = Matrix::Zero(2, 2);
    precision(0, 0) = q_gamma.mean();
    precision(1, 1) = 1.0 / cfg.epsilon;
    return GaussianBelief::from_mean_precision(mean, precision);
}

/// Message 5: likelihood of y_t pushed onto z_t; singular (touches x_{t+1} only).
inline GaussianBelief msg_likelihood_state(double y, const GammaBelief& q_xi)
{
    const double xi = q_xi.mean();
    Matrix precision = Matrix::Zero(2, 2);
    precision(0, 0) = xi;
    Vector potential = Vector::Zero(2);
    potential[0] = xi * y;
    return GaussianBelief::from_information(potential, precision);
}

/// Message 11: ν(ξ) = Gamma(3/2, E[(y - s' z)^2]/2).
inline GammaBelief msg_xi(double y, const GaussianBelief& q_z)
{
    const auto z = detail::state_moments(q_z, "q(z_t)");
    const double r = y - z.mean[0];
    return {1.5, 0.5 * (r * r + z.cov(0, 0))};
}

/// E[log N(z_t; f, V)] under the mean-field beliefs (surrogate g).
inline double expected_transition_log_density(const GaussianBelief& q_z, const GaussianBelief& q_zprev,
                                              const GaussianBelief& q_theta, const GaussianBelief& q_eta,
                                              const GammaBelief& q_gamma, const NodeConfig& cfg)
{
    const auto z = detail::state_moments(q_z, "q(z_t)");
    const auto zp = detail::state_moments(q_zprev, "q(z_{t-1})");
    const double shift = z.mean[1] - zp.mean[0];
    const double shift_sq = shift * shift + z.cov(1, 1) + zp.cov(0, 0);
    const double resid_sq = expected_squared_residual(q_z, q_zprev, q_theta, q_eta, cfg);
    return -std::log(2.0 * std::numbers::pi) + 0.5 * q_gamma.mean_log() - 0.5 * std::log(cfg.epsilon)
           - 0.5 * q_gamma.mean() * resid_sq - 0.5 * shift_sq / cfg.epsilon;
}

/// E[log N(y_t; s' z_t, 1/ξ)].
inline double expected_likelihood_log_density(double y, const GaussianBelief& q_z, const GammaBelief& q_xi)
{
    return -0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * q_xi.mean_log()
           - q_xi.mean() * msg_xi(y, q_z).rate();
}

} // namespace fesid
