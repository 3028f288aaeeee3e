#pragma once

// Discretized Duffing oscillator: physical <-> autoregressive parameter maps,
// the deterministic transition and a seeded stochastic simulator.
//
// Time indexing: sample k pairs input u[k] with output y[k] = x[k] + v[k], and
//   x[k] = θ1 x[k-1] + θ2 x[k-1]^3 + θ3 x[k-2] + η (u[k] + w[k]),
// i.e. the input that accompanies a sample is the one that drives it.

#include "fesid/error.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fesid {

struct PhysicalParams {
    double m = 1.0;   ///< mass
    double c = 0.0;   ///< damping
    double a = 0.0;   ///< linear stiffness
    double b = 0.0;   ///< cubic stiffness
    double tau = 1.0; ///< process-noise precision
    double xi = 1.0;  ///< measurement-noise precision
};

struct ArCoefficients {
    std::array<double, 3> theta{};
    double eta = 0.0;
    double gamma = 1.0;
};

/// z = (x_t, x_{t-1})
using StateVector = std::array<double, 2>;

struct TimeSeries {
    std::vector<double> u;
    std::vector<double> y;
    double delta = 1.0;

    [[nodiscard]] std::size_t size() const { return y.size(); }
};

inline void validate(const TimeSeries& ts)
{
    if (ts.u.size() != ts.y.size())
        throw std::invalid_argument("time series: u and y lengths differ");
    if (!(ts.delta > 0.0)) throw std::invalid_argument("time series: delta must be positive");
}

inline ArCoefficients phys_to_ar(const PhysicalParams& p, double delta)
{
    const double den = p.m + p.c * delta;
    if (den == 0.0 || !std::isfinite(den)) throw InferenceError("degenerate discretization");
    if (!(p.tau > 0.0)) throw std::invalid_argument("phys_to_ar: tau must be positive");
    const double d2 = delta * delta;
    ArCoefficients out;
    out.theta = {(2.0 * p.m + p.c * delta - p.a * d2) / den, -p.b * d2 / den, -p.m / den};
    out.eta = d2 / den;
    out.gamma = p.tau * den * den / (d2 * d2);
    return out;
}

/// Point estimates from AR coefficients; xi cannot be recovered here and is left at 0.
inline PhysicalParams ar_to_phys(const ArCoefficients& c, double delta)
{
    if (c.eta == 0.0) throw InferenceError("inversion undefined");
    const auto& th = c.theta;
    PhysicalParams p;
    p.m = -th[2] * delta * delta / c.eta;
    p.c = (1.0 + th[2]) * delta / c.eta;
    p.a = (1.0 - th[0] - th[2]) / c.eta;
    p.b = -th[1] / c.eta;
    p.tau = c.gamma * c.eta * c.eta;
    p.xi = 0.0;
    return p;
}

inline double g_eval(const std::array<double, 3>& theta, const StateVector& z)
{
    const double x = z[0];
    return theta[0] * x + theta[1] * x * x * x + theta[2] * z[1];
}

/// f(θ, z, η, u) = S z + s g(θ, z) + s η u
inline StateVector step_mean(const ArCoefficients& c, const StateVector& z_prev, double u)
{
    return {g_eval(c.theta, z_prev) + c.eta * u, z_prev[0]};
}

struct SimulationOptions {
    std::uint64_t seed = 0;
    StateVector x0{0.0, 0.0}; ///< (x[1], x[0])
    bool noise_free = false;
    double divergence_limit = 1e6;
};

struct Simulation {
    TimeSeries series;
    std::vector<double> latent; ///< noise-free-of-measurement state x[k]
    ArCoefficients coefficients;
};

/// Runs the discrete recursion. Process noise w ~ N(0, 1/tau) enters as η w;
/// measurement noise v ~ N(0, 1/xi). Deterministic for a given seed.
inline Simulation simulate(const PhysicalParams& p, std::span<const double> u, double delta,
                           const SimulationOptions& opt = {})
{
    if (u.size() < 3) throw std::invalid_argument("simulate: need at least 3 input samples");
    if (!(delta > 0.0)) throw std::invalid_argument("simulate: delta must be positive");
    if (!opt.noise_free && !(p.xi > 0.0))
        throw std::invalid_argument("simulate: xi must be positive");

    Simulation sim;
    sim.coefficients = phys_to_ar(p, delta);
    const auto& c = sim.coefficients;

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double w_std = opt.noise_free ? 0.0 : 1.0 / std::sqrt(p.tau);
    const double v_std = opt.noise_free ? 0.0 : 1.0 / std::sqrt(p.xi);

    const std::size_t n = u.size();
    std::vector<double> x(n);
    x[0] = opt.x0[1];
    x[1] = opt.x0[0];
    for (std::size_t k = 2; k < n; ++k) {
        const double w = opt.noise_free ? 0.0 : w_std * normal(rng);
        x[k] = step_mean(c, {x[k - 1], x[k - 2]}, u[k] + w)[0];
        if (!std::isfinite(x[k]) || std::abs(x[k]) > opt.divergence_limit)
            throw InferenceError("unstable simulation at step " + std::to_string(k));
    }

    sim.series.u.assign(u.begin(), u.end());
    sim.series.delta = delta;
    sim.series.y.resize(n);
    for (std::size_t k = 0; k < n; ++k)
        sim.series.y[k] = x[k] + (opt.noise_free ? 0.0 : v_std * normal(rng));
    sim.latent = std::move(x);
    return sim;
}

} // namespace fesid
