#pragma once

// Exponential-family beliefs carried on factor-graph edges.
//
// Gaussians live in information form (precision matrix W and potential
// h = W * mean) so that rank-deficient messages, such as the likelihood
// message that only touches the first state component, are representable.
// Gammas use the shape/rate convention: p(x) ∝ x^(shape-1) exp(-rate x).

#include "fesid/error.hpp"

#include <Eigen/Dense>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <numbers>
#include <string>

namespace fesid {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline Matrix symmetrized(const Matrix& m)
{
    return 0.5 * (m + m.transpose());
}

struct GaussianMoments {
    Vector mean;
    Matrix covariance;
};

class GaussianBelief {
public:
    GaussianBelief() = default;

    /// Information form: precision W and potential h = W * mean.
    static GaussianBelief from_information(Vector potential, const Matrix& precision)
    {
        detail::require(precision.rows() == precision.cols(), "precision must be square");
        detail::require(potential.size() == precision.rows(), "potential/precision dimension mismatch");
        GaussianBelief g;
        g.potential_ = std::move(potential);
        g.precision_ = symmetrized(precision);
        return g;
    }

    static GaussianBelief from_mean_precision(const Vector& mean, const Matrix& precision)
    {
        detail::require(mean.size() == precision.rows(), "mean/precision dimension mismatch");
        return from_information(precision * mean, precision);
    }

    static GaussianBelief from_moments(const Vector& mean, const Matrix& covariance)
    {
        detail::require(mean.size() == covariance.rows() && covariance.rows() == covariance.cols(),
                        "mean/covariance dimension mismatch");
        Eigen::LLT<Matrix> llt(symmetrized(covariance));
        if (llt.info() != Eigen::Success)
            throw InferenceError("covariance is not positive definite");
        const Matrix precision = llt.solve(Matrix::Identity(mean.size(), mean.size()));
        return from_mean_precision(mean, precision);
    }

    /// Scalar convenience: N(mean, variance).
    static GaussianBelief scalar(double mean, double variance)
    {
        return from_moments(Vector::Constant(1, mean), Matrix::Constant(1, 1, variance));
    }

    [[nodiscard]] Eigen::Index dim() const { return potential_.size(); }
    [[nodiscard]] const Matrix& precision() const { return precision_; }
    [[nodiscard]] const Vector& potential() const { return potential_; }

    /// Strictly positive-definite precision.
    [[nodiscard]] bool is_proper() const
    {
        if (dim() == 0) return false;
        Eigen::LLT<Matrix> llt(precision_);
        return llt.info() == Eigen::Success && potential_.allFinite();
    }

private:
    Vector potential_;
    Matrix precision_;
};

/// Normalized product of two Gaussian densities (two messages colliding on an edge).
inline GaussianBelief combine_gaussian(const GaussianBelief& a, const GaussianBelief& b)
{
    detail::require(a.dim() == b.dim(), "combine_gaussian: dimension mismatch");
    auto out = GaussianBelief::from_information(a.potential() + b.potential(),
                                                a.precision() + b.precision());
    if (!out.is_proper()) throw InferenceError("improper posterior");
    return out;
}

inline GaussianMoments gaussian_moments(const GaussianBelief& g)
{
    Eigen::LLT<Matrix> llt(g.precision());
    if (g.dim() == 0 || llt.info() != Eigen::Success)
        throw InferenceError("moments undefined for improper belief");
    GaussianMoments m;
    m.mean = llt.solve(g.potential());
    m.covariance = symmetrized(llt.solve(Matrix::Identity(g.dim(), g.dim())));
    return m;
}

inline double log_det_precision(const GaussianBelief& g)
{
    Eigen::LLT<Matrix> llt(g.precision());
    if (g.dim() == 0 || llt.info() != Eigen::Success)
        throw InferenceError("log-determinant undefined for improper belief");
    const Matrix& l = llt.matrixLLT();
    return 2.0 * l.diagonal().array().log().sum();
}

inline double entropy_gaussian(const GaussianBelief& g)
{
    const double d = static_cast<double>(g.dim());
    return 0.5 * d * std::log(2.0 * std::numbers::pi * std::numbers::e) - 0.5 * log_det_precision(g);
}

/// KL(q || p) for proper Gaussians of equal dimension.
inline double kl_gaussian(const GaussianBelief& q, const GaussianBelief& p)
{
    detail::require(q.dim() == p.dim(), "kl_gaussian: dimension mismatch");
    const auto mq = gaussian_moments(q);
    const Vector pm = gaussian_moments(p).mean;
    const Vector diff = mq.mean - pm;
    const double trace = (p.precision() * mq.covariance).trace();
    const double quad = diff.dot(p.precision() * diff);
    return 0.5 * (trace + quad - static_cast<double>(q.dim()) + log_det_precision(q) - log_det_precision(p));
}

class GammaBelief {
public:
    GammaBelief() = default;
    GammaBelief(double shape, double rate) : shape_(shape), rate_(rate) {}

    [[nodiscard]] double shape() const { return shape_; }
    [[nodiscard]] double rate() const { return rate_; }

    [[nodiscard]] bool is_proper() const
    {
        return shape_ > 0.0 && rate_ > 0.0 && std::isfinite(shape_) && std::isfinite(rate_);
    }

    [[nodiscard]] double mean() const
    {
        require_proper();
        return shape_ / rate_;
    }

    [[nodiscard]] double variance() const
    {
        require_proper();
        return shape_ / (rate_ * rate_);
    }

    /// E[log x]
    [[nodiscard]] double mean_log() const
    {
        require_proper();
        return boost::math::digamma(shape_) - std::log(rate_);
    }

    friend bool operator==(const GammaBelief&, const GammaBelief&) = default;

private:
    void require_proper() const
    {
        if (!is_proper()) throw InferenceError("moments undefined for improper belief");
    }

    double shape_ = 1.0;
    double rate_ = 0.0;
};

inline GammaBelief combine_gamma(const GammaBelief& a, const GammaBelief& b)
{
    const double shape = a.shape() + b.shape() - 1.0;
    const double rate = a.rate() + b.rate();
    if (!(shape > 0.0) || !(rate > 0.0)) throw InferenceError("improper posterior");
    return {shape, rate};
}

inline double entropy_gamma(const GammaBelief& g)
{
    if (!g.is_proper()) throw InferenceError("entropy undefined for improper belief");
    const double a = g.shape();
    return a - std::log(g.rate()) + std::lgamma(a) + (1.0 - a) * boost::math::digamma(a);
}

namespace detail {

/// lgamma(a + d) - lgamma(a). Differencing two lgamma values loses everything
/// once a is ~1e8 and d is O(1), so close shapes go through the gamma ratio.
inline double lgamma_difference(double a, double d)
{
    if (d == 0.0) return 0.0;
    // ratio ~ a^-d; stay inside the double range
    if (std::abs(d) <= 0.5 * a && std::abs(d) * std::log(a + std::abs(d)) < 600.0)
        return -std::log(boost::math::tgamma_delta_ratio(a, d));
    return std::lgamma(a + d) - std::lgamma(a);
}

} // namespace detail

/// KL(q || p) for proper Gammas. Shape and rate differences are formed
/// directly (log1p, gamma ratio); shapes of 1e8 otherwise drown them in rounding.
inline double kl_gamma(const GammaBelief& q, const GammaBelief& p)
{
    if (!q.is_proper() || !p.is_proper()) throw InferenceError("KL undefined for improper belief");
    const double aq = q.shape(), bq = q.rate(), ap = p.shape(), bp = p.rate();
    const double shape_part = (aq - ap) * boost::math::digamma(aq) - detail::lgamma_difference(ap, aq - ap);
    const double rel = (bq - bp) / bp;
    const double rate_part = ap * std::log1p(rel) - aq * (bq - bp) / bq;
    return shape_part + rate_part;
}

} // namespace fesid
