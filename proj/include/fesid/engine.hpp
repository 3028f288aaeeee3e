#pragma once

// Online variational message passing for the NLARX model.
//
// One time step runs `iterations_per_step` sweeps of
//   q(z_t) <- msg9 * msg5
//   q(θ)   <- prior(θ) * msg6,  q(η) <- prior(η) * msg7,  q(γ) <- prior(γ) * msg8
//   q(ξ)   <- prior(ξ) * msg11
// where "prior" is the posterior handed over from the previous step. After
// the sweeps q(z_t) becomes the next step's q(z_{t-1}).

#include "fesid/beliefs.hpp"
#include "fesid/duffing.hpp"
#include "fesid/nlarx.hpp"

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fesid {

struct PriorConfig {
    ModelMode mode = ModelMode::nlarx;
    /// Prior over the full (θ1, θ2, θ3); LARX mode uses the (θ1, θ3) block.
    Vector theta_mean = Vector::Constant(3, 1.0);
    Matrix theta_cov = 10.0 * Matrix::Identity(3, 3);
    double eta_mean = 1.0;
    double eta_var = 10.0;
    GammaBelief gamma{1e3, 1e1};
    GammaBelief xi{1e8, 1e3};
    /// Initial q(z) = N(state_mean, state_cov) over (x[1], x[0]). Unset parts
    /// are seeded from the data: mean (y[1], y[0]), covariance I / E[ξ].
    std::optional<Vector> state_mean;
    std::optional<Matrix> state_cov;
    double epsilon = 1e-8;
    int iterations_per_step = 5;
};

inline void validate(const PriorConfig& cfg)
{
    auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
    if (cfg.theta_mean.size() != 3 || cfg.theta_cov.rows() != 3 || cfg.theta_cov.cols() != 3)
        fail("theta prior must be 3-dimensional");
    if ((cfg.state_mean && cfg.state_mean->size() != 2)
        || (cfg.state_cov && (cfg.state_cov->rows() != 2 || cfg.state_cov->cols() != 2)))
        fail("state prior must be 2-dimensional");
    if (Eigen::LLT<Matrix>(symmetrized(cfg.theta_cov)).info() != Eigen::Success)
        fail("theta covariance must be positive definite");
    if (cfg.state_cov && Eigen::LLT<Matrix>(symmetrized(*cfg.state_cov)).info() != Eigen::Success)
        fail("state covariance must be positive definite");
    if (!(cfg.eta_var > 0.0)) fail("eta variance must be positive");
    if (!cfg.gamma.is_proper()) fail("gamma prior shape and rate must be positive");
    if (!cfg.xi.is_proper()) fail("xi prior shape and rate must be positive");
    if (!(cfg.epsilon > 0.0)) fail("epsilon must be positive");
    if (cfg.iterations_per_step < 1) fail("iterations_per_step must be >= 1");
}

struct BeliefSet {
    GaussianBelief theta;
    GaussianBelief eta;
    GammaBelief gamma;
    GammaBelief xi;
    GaussianBelief state; ///< q(z_t) after a step; q(z_{t-1}) going into the next
};

/// `first` = (y[1], y[0]) fills whatever part of the state prior the config leaves unset.
inline BeliefSet initial_beliefs(const PriorConfig& cfg, const StateVector& first = {0.0, 0.0})
{
    validate(cfg);
    BeliefSet b;
    if (cfg.mode == ModelMode::nlarx) {
        b.theta = GaussianBelief::from_moments(cfg.theta_mean, cfg.theta_cov);
    } else {
        const std::array<Eigen::Index, 2> keep{0, 2};
        Vector m(2);
        Matrix v(2, 2);
        for (int i = 0; i < 2; ++i) {
            m[i] = cfg.theta_mean[keep[i]];
            for (int j = 0; j < 2; ++j) v(i, j) = cfg.theta_cov(keep[i], keep[j]);
        }
        b.theta = GaussianBelief::from_moments(m, v);
    }
    b.eta = GaussianBelief::scalar(cfg.eta_mean, cfg.eta_var);
    b.gamma = cfg.gamma;
    b.xi = cfg.xi;
    const Vector seed = Eigen::Vector2d(first[0], first[1]);
    const Matrix seed_cov = Matrix::Identity(2, 2) / cfg.xi.mean();
    b.state = GaussianBelief::from_moments(cfg.state_mean.value_or(seed), cfg.state_cov.value_or(seed_cov));
    return b;
}

/// Posterior means mapped to AR coefficients (θ2 = 0 in LARX mode).
inline ArCoefficients point_estimate(const BeliefSet& b)
{
    ArCoefficients c;
    c.theta = full_theta(gaussian_moments(b.theta).mean);
    c.eta = gaussian_moments(b.eta).mean[0];
    c.gamma = b.gamma.mean();
    return c;
}

struct FreeEnergyTerms {
    double kl_theta = 0.0;
    double kl_eta = 0.0;
    double kl_gamma = 0.0;
    double kl_xi = 0.0;
    double state_entropy = 0.0;
    double transition = 0.0; ///< E[log N(z_t; f, V)]
    double likelihood = 0.0; ///< E[log N(y_t; s'z_t, 1/ξ)]

    [[nodiscard]] double total() const
    {
        return kl_theta + kl_eta + kl_gamma + kl_xi - state_entropy - transition - likelihood;
    }
};

inline FreeEnergyTerms free_energy_terms(const BeliefSet& q, double u, double y, const BeliefSet& prior,
                                         double epsilon)
{
    const NodeConfig node{epsilon, u};
    FreeEnergyTerms t;
    t.kl_theta = kl_gaussian(q.theta, prior.theta);
    t.kl_eta = kl_gaussian(q.eta, prior.eta);
    t.kl_gamma = kl_gamma(q.gamma, prior.gamma);
    t.kl_xi = kl_gamma(q.xi, prior.xi);
    t.state_entropy = entropy_gaussian(q.state);
    t.transition = expected_transition_log_density(q.state, prior.state, q.theta, q.eta, q.gamma, node);
    t.likelihood = expected_likelihood_log_density(y, q.state, q.xi);
    return t;
}

/// Single-step free energy: E_q[log q] - E_q[log p(y_t, z_t, ψ | previous beliefs)].
/// `prior` carries the beliefs handed over from the previous step, its
/// `state` being q(z_{t-1}).
inline double compute_free_energy(const BeliefSet& q, double u, double y, const BeliefSet& prior,
                                  const PriorConfig& cfg)
{
    const auto t = free_energy_terms(q, u, y, prior, cfg.epsilon);
    const double f = t.total();
    if (!std::isfinite(f)) {
        std::ostringstream os;
        os << "non-finite free energy: kl_theta=" << t.kl_theta << " kl_eta=" << t.kl_eta
           << " kl_gamma=" << t.kl_gamma << " kl_xi=" << t.kl_xi << " entropy=" << t.state_entropy
           << " transition=" << t.transition << " likelihood=" << t.likelihood;
        throw InferenceError(os.str());
    }
    return f;
}

struct StepReport {
    std::size_t t = 0;
    double free_energy = 0.0;
    double prediction_mean = 0.0; ///< from message 9 before y_t is seen
    double prediction_var = 0.0;
    std::vector<double> free_energy_trace; ///< one entry per sweep
};

struct StepResult {
    BeliefSet beliefs;
    StepReport report;
};

inline StepResult step_update(const BeliefSet& prior, double u, double y, const PriorConfig& cfg,
                              std::size_t t = 0)
{
    const NodeConfig node{cfg.epsilon, u};
    const Eigen::Index dim = prior.theta.dim();
    StepResult out;
    out.report.t = t;
    try {
        BeliefSet q = prior;
        for (int it = 0; it < cfg.iterations_per_step; ++it) {
            const auto forward = msg_forward_state(prior.state, q.theta, q.eta, q.gamma, node);
            if (it == 0) {
                out.report.prediction_mean = gaussian_moments(forward).mean[0];
                out.report.prediction_var = 1.0 / q.gamma.mean() + 1.0 / q.xi.mean();
            }
            q.state = combine_gaussian(forward, msg_likelihood_state(y, q.xi));
            q.theta = combine_gaussian(prior.theta, msg_theta(q.state, prior.state, q.eta, q.gamma, node, dim));
            q.eta = combine_gaussian(prior.eta, msg_eta(q.state, prior.state, q.theta, q.gamma, node));
            q.gamma = combine_gamma(prior.gamma, msg_gamma(q.state, prior.state, q.theta, q.eta, node));
            q.xi = combine_gamma(prior.xi, msg_xi(y, q.state));
            out.report.free_energy_trace.push_back(compute_free_energy(q, u, y, prior, cfg));
        }
        out.report.free_energy = out.report.free_energy_trace.back();
        out.beliefs = std::move(q);
    } catch (const InferenceError& e) {
        throw InferenceError("step " + std::to_string(t) + ": " + e.what());
    }
    return out;
}

/// Streaming front end: constant memory, one `observe` per sample.
class OnlineIdentifier {
public:
    /// `first` = (y[1], y[0]), the two samples preceding the first observed one.
    explicit OnlineIdentifier(PriorConfig cfg, const StateVector& first = {0.0, 0.0})
        : cfg_(std::move(cfg)), beliefs_(initial_beliefs(cfg_, first))
    {
    }

    OnlineIdentifier(PriorConfig cfg, BeliefSet start) : cfg_(std::move(cfg)), beliefs_(std::move(start)) {}

    StepReport observe(double u, double y)
    {
        auto r = step_update(beliefs_, u, y, cfg_, t_++);
        beliefs_ = std::move(r.beliefs);
        return std::move(r.report);
    }

    [[nodiscard]] const BeliefSet& beliefs() const { return beliefs_; }
    [[nodiscard]] const PriorConfig& config() const { return cfg_; }
    [[nodiscard]] std::size_t steps() const { return t_; }

private:
    PriorConfig cfg_;
    BeliefSet beliefs_;
    std::size_t t_ = 0;
};

struct IdentifyResult {
    BeliefSet beliefs;
    std::vector<StepReport> reports;
};

/// Single forward pass over samples 2..T-1; the initial state prior covers
/// z = (x[1], x[0]).
inline IdentifyResult identify(const TimeSeries& data, const PriorConfig& cfg)
{
    validate(data);
    if (data.size() < 3) throw InferenceError("insufficient data");
    OnlineIdentifier online(cfg, {data.y[1], data.y[0]});
    IdentifyResult out;
    out.reports.reserve(data.size() - 2);
    for (std::size_t k = 2; k < data.size(); ++k) {
        auto r = online.observe(data.u[k], data.y[k]);
        r.t = k;
        out.reports.push_back(std::move(r));
    }
    out.beliefs = online.beliefs();
    return out;
}

/// 1-step-ahead prediction with frozen beliefs: z_{t-1} = (y[t-1], y[t-2]).
/// The first two outputs are given and copied through.
inline std::vector<double> predict_onestep(const BeliefSet& frozen, const TimeSeries& data)
{
    validate(data);
    const auto c = point_estimate(frozen);
    std::vector<double> out(data.size());
    for (std::size_t k = 0; k < data.size(); ++k) {
        out[k] = k < 2 ? data.y[k] : step_mean(c, {data.y[k - 1], data.y[k - 2]}, data.u[k])[0];
    }
    return out;
}

/// Free-run simulation from (y[1], y[0]) using the model's own predictions.
inline std::vector<double> simulate_rollout(const BeliefSet& frozen, const TimeSeries& data,
                                            double divergence_limit = 1e6)
{
    validate(data);
    const auto c = point_estimate(frozen);
    std::vector<double> out(data.size());
    StateVector z{0.0, 0.0};
    for (std::size_t k = 0; k < data.size(); ++k) {
        if (k < 2) {
            out[k] = data.y[k];
            z = {data.y[k], k == 0 ? 0.0 : data.y[k - 1]};
            continue;
        }
        z = step_mean(c, z, data.u[k]);
        if (!std::isfinite(z[0]) || std::abs(z[0]) > divergence_limit)
            throw InferenceError("rollout diverged at step " + std::to_string(k));
        out[k] = z[0];
    }
    return out;
}

inline double evaluate_mse(std::span<const double> predictions, std::span<const double> actual)
{
    if (predictions.size() != actual.size())
        throw std::invalid_argument("evaluate_mse: length mismatch");
    if (predictions.empty()) throw std::invalid_argument("evaluate_mse: empty series");
    double acc = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double d = predictions[i] - actual[i];
        acc += d * d;
    }
    return acc / static_cast<double>(actual.size());
}

} // namespace fesid
