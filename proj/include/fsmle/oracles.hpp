#pragma once

// Closed-form and quadrature ground truth for the Gaussian-smoothing view of local score
// matching. Used by the tests, the acceptance suite and the `verify` subcommand.

#include "fsmle/core.hpp"
#include "fsmle/model.hpp"

#include <cstdint>
#include <variant>
#include <vector>

namespace fsmle {

/// Gauss-Hermite rule for E_{z ~ N(0,1)} f(z) = sum_i w_i f(z_i) (probabilists' convention).
struct GaussHermiteRule {
    Vector<double> nodes;
    Vector<double> weights;
};

[[nodiscard]] GaussHermiteRule gauss_hermite(Index points);

/// Smoothed likelihood of the Gaussian location model: x ~ N(theta_t, Sigma + sigma^2 I).
struct SmoothedGaussianOracle {
    Matrix<double> covariance;
    double sigma = 0.0;
    ParamVec center;
};

/// (Sigma + sigma^2 I)^{-1} (x - center).
template <typename DerivedS, typename DerivedC, typename DerivedX>
[[nodiscard]] Vector<typename DerivedX::Scalar> smoothed_grad_exact(const Eigen::MatrixBase<DerivedS>& covariance,
                                                                   typename DerivedX::Scalar sigma,
                                                                   const Eigen::MatrixBase<DerivedC>& center,
                                                                   const Eigen::MatrixBase<DerivedX>& x) {
    using Scalar = typename DerivedX::Scalar;
    require_dim(x.size(), covariance.rows(), "smoothed_grad_exact");
    require_dim(center.size(), covariance.rows(), "smoothed_grad_exact center");
    Matrix<Scalar> smoothed = covariance;
    smoothed.diagonal().array() += sigma * sigma;
    return smoothed.llt().solve((x - center).eval());
}

[[nodiscard]] inline Vector<double> smoothed_grad_exact(const SmoothedGaussianOracle& oracle, const DataVec& x) {
    return smoothed_grad_exact(oracle.covariance, oracle.sigma, oracle.center, x);
}

/// Posterior-mean score E_{theta ~ p(theta | x, center)} Sigma^{-1}(x - theta) under the
/// proposal N(center, sigma^2 I). Computed through the conjugate posterior.
template <typename DerivedS, typename DerivedC, typename DerivedX>
[[nodiscard]] Vector<typename DerivedX::Scalar> bayes_optimal_score_gaussian(
    const Eigen::MatrixBase<DerivedS>& covariance, typename DerivedX::Scalar sigma,
    const Eigen::MatrixBase<DerivedC>& center, const Eigen::MatrixBase<DerivedX>& x) {
    using Scalar = typename DerivedX::Scalar;
    const Index d = covariance.rows();
    require_dim(x.size(), d, "bayes_optimal_score_gaussian");
    const Matrix<Scalar> precision = covariance.llt().solve(Matrix<Scalar>::Identity(d, d));
    if (sigma == Scalar(0)) {
        return precision * (x - center);
    }
    const Scalar prior_precision = Scalar(1) / (sigma * sigma);
    Matrix<Scalar> post_precision = precision;
    post_precision.diagonal().array() += prior_precision;
    const Vector<Scalar> post_mean =
        post_precision.llt().solve((precision * x + prior_precision * center).eval());
    return precision * (x - post_mean);
}

/// Tensor-product grid over parameter space, [lower_i, upper_i] with `points` nodes per axis.
/// Simpson weights for an odd node count, trapezoid otherwise.
struct ParameterGrid {
    ParamVec lower;
    ParamVec upper;
    Index points = 2001;
};

/// Gauss-Hermite over the proposal. Suited to smooth likelihoods.
struct HermiteGrid {
    Index points = 64;
};

using QuadratureSpec = std::variant<HermiteGrid, ParameterGrid>;

/// log E_{z ~ N(0, I)} p(x | center + sigma z) by tensor quadrature (d <= 2).
[[nodiscard]] double smoothed_loglik_quadrature(const SimulatorModel& model, const ParamVec& center, double sigma,
                                                const DataVec& x, const QuadratureSpec& spec = HermiteGrid{});

/// Central difference of the quadrature smoothed log-likelihood, step 1e-4 max(1, |center_i|).
[[nodiscard]] Vector<double> smoothed_grad_quadrature(const SimulatorModel& model, const ParamVec& center,
                                                      double sigma, const DataVec& x,
                                                      const QuadratureSpec& spec = HermiteGrid{});

/// The intractable objective E|score - S_W(x)|^2 and the tractable E[|S_W|^2 + 2 S_W grad log q]
/// for the 1-d Gaussian model N(theta, tau^2) with affine S_W(x) = slope x + intercept,
/// both by Gauss-Hermite quadrature over (theta, x).
struct ObjectivePair {
    double intractable = 0.0;
    double tractable = 0.0;
};

[[nodiscard]] ObjectivePair score_matching_objectives_1d(double tau, double sigma, double center, double slope,
                                                         double intercept, Index points = 64);

struct BiasRow {
    double sigma = 0.0;
    double bias = 0.0;
    double bound = 0.0;
    double lipschitz = 0.0;
    double mean_ratio = 0.0;
};

/// For x ~ N(theta_star, Sigma): mean |(Sigma + sigma^2 I)^{-1}(x - theta_t) - Sigma^{-1}(x - theta_t)|
/// against L sqrt(d) sigma E[p(x|theta_star) / p(x|theta_t)], L the largest eigenvalue of Sigma^{-1}.
/// The same draws are reused for every sigma.
[[nodiscard]] std::vector<BiasRow> bias_scaling_probe(const GaussianMeanModel& model, const ParamVec& theta_star,
                                                      const ParamVec& theta_t, const std::vector<double>& sigmas,
                                                      Index samples, std::uint64_t seed);

}  // namespace fsmle
