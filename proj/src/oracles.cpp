#include "fsmle/oracles.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace fsmle {

GaussHermiteRule gauss_hermite(Index points) {
    if (points < 1) {
        throw DomainError("gauss_hermite: need at least one node");
    }
    // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite recurrence
    Matrix<double> jacobi = Matrix<double>::Zero(points, points);
    for (Index i = 1; i < points; ++i) {
        jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
    }
    Eigen::SelfAdjointEigenSolver<Matrix<double>> eig(jacobi);
    GaussHermiteRule rule;
    rule.nodes = eig.eigenvalues();
    rule.weights = eig.eigenvectors().row(0).transpose().cwiseAbs2();
    return rule;
}

namespace {

double log_sum_exp(const std::vector<double>& terms) {
    double peak = -std::numeric_limits<double>::infinity();
    for (double t : terms) {
        peak = std::max(peak, t);
    }
    if (!std::isfinite(peak)) {
        return peak;
    }
    double sum = 0.0;
    for (double t : terms) {
        sum += std::exp(t - peak);
    }
    return peak + std::log(sum);
}

double hermite_loglik(const SimulatorModel& model, const ParamVec& center, double sigma, const DataVec& x,
                      Index points) {
    const GaussHermiteRule rule = gauss_hermite(points);
    const Index d = center.size();
    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(d == 1 ? points : points * points));
    ParamVec theta(d);
    if (d == 1) {
        for (Index i = 0; i < points; ++i) {
            theta[0] = center[0] + sigma * rule.nodes[i];
            terms.push_back(std::log(rule.weights[i]) + model.log_density(theta, x));
        }
    } else {
        for (Index i = 0; i < points; ++i) {
            for (Index j = 0; j < points; ++j) {
                theta[0] = center[0] + sigma * rule.nodes[i];
                theta[1] = center[1] + sigma * rule.nodes[j];
                terms.push_back(std::log(rule.weights[i] * rule.weights[j]) + model.log_density(theta, x));
            }
        }
    }
    return log_sum_exp(terms);
}

double grid_loglik(const SimulatorModel& model, const ParamVec& center, double sigma, const DataVec& x,
                   const ParameterGrid& grid) {
    const Index d = center.size();
    require_dim(grid.lower.size(), d, "parameter grid lower");
    require_dim(grid.upper.size(), d, "parameter grid upper");
    if (grid.points < 2 || !(grid.upper.array() > grid.lower.array()).all()) {
        throw DomainError("parameter grid needs >= 2 points and upper > lower");
    }
    const Vector<double> step = (grid.upper - grid.lower) / static_cast<double>(grid.points - 1);
    const double log_cell = step.array().log().sum();
    const double log_norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * sigma * sigma);

    auto node_term = [&](const ParamVec& theta, double log_trapezoid) {
        const double log_proposal = log_norm - 0.5 * (theta - center).squaredNorm() / (sigma * sigma);
        return log_trapezoid + log_cell + log_proposal + model.log_density(theta, x);
    };
    // composite Simpson for an odd node count, trapezoid otherwise
    const bool simpson = grid.points % 2 == 1;
    auto edge = [&](Index i) {
        if (i == 0 || i == grid.points - 1) {
            return simpson ? std::log(1.0 / 3.0) : std::log(0.5);
        }
        if (!simpson) {
            return 0.0;
        }
        return i % 2 == 1 ? std::log(4.0 / 3.0) : std::log(2.0 / 3.0);
    };

    std::vector<double> terms;
    ParamVec theta(d);
    if (d == 1) {
        for (Index i = 0; i < grid.points; ++i) {
            theta[0] = grid.lower[0] + step[0] * static_cast<double>(i);
            terms.push_back(node_term(theta, edge(i)));
        }
    } else {
        for (Index i = 0; i < grid.points; ++i) {
            for (Index j = 0; j < grid.points; ++j) {
                theta[0] = grid.lower[0] + step[0] * static_cast<double>(i);
                theta[1] = grid.lower[1] + step[1] * static_cast<double>(j);
                terms.push_back(node_term(theta, edge(i) + edge(j)));
            }
        }
    }
    return log_sum_exp(terms);
}

}  // namespace

double smoothed_loglik_quadrature(const SimulatorModel& model, const ParamVec& center, double sigma,
                                  const DataVec& x, const QuadratureSpec& spec) {
    model.check_param(center);
    require_dim(x.size(), model.data_dim(), "x");
    if (!model.has_log_density()) {
        throw UnsupportedError("smoothed quadrature needs a model with a tractable density");
    }
    if (center.size() > 2) {
        throw UnsupportedError("smoothed quadrature supports d <= 2; use a Monte-Carlo estimate instead");
    }
    if (!(sigma > 0.0)) {
        throw DomainError("smoothed quadrature: sigma must be positive");
    }
    if (const auto* hermite = std::get_if<HermiteGrid>(&spec)) {
        return hermite_loglik(model, center, sigma, x, hermite->points);
    }
    return grid_loglik(model, center, sigma, x, std::get<ParameterGrid>(spec));
}

Vector<double> smoothed_grad_quadrature(const SimulatorModel& model, const ParamVec& center, double sigma,
                                        const DataVec& x, const QuadratureSpec& spec) {
    const Index d = center.size();
    Vector<double> grad(d);
    for (Index i = 0; i < d; ++i) {
        const double h = 1e-4 * std::max(1.0, std::abs(center[i]));
        ParamVec plus = center;
        ParamVec minus = center;
        plus[i] += h;
        minus[i] -= h;
        grad[i] = (smoothed_loglik_quadrature(model, plus, sigma, x, spec) -
                   smoothed_loglik_quadrature(model, minus, sigma, x, spec)) /
                  (2.0 * h);
    }
    return grad;
}

ObjectivePair score_matching_objectives_1d(double tau, double sigma, double center, double slope, double intercept,
                                           Index points) {
    if (!(tau > 0.0) || !(sigma > 0.0)) {
        throw DomainError("score_matching_objectives_1d: tau and sigma must be positive");
    }
    const GaussHermiteRule rule = gauss_hermite(points);
    ObjectivePair out;
    for (Index i = 0; i < points; ++i) {
        const double theta = center + sigma * rule.nodes[i];
        const double proposal_grad = -(theta - center) / (sigma * sigma);
        for (Index j = 0; j < points; ++j) {
            const double x = theta + tau * rule.nodes[j];
            const double w = rule.weights[i] * rule.weights[j];
            const double score = (x - theta) / (tau * tau);
            const double model = slope * x + intercept;
            out.intractable += w * (score - model) * (score - model);
            out.tractable += w * (model * model + 2.0 * model * proposal_grad);
        }
    }
    return out;
}

std::vector<BiasRow> bias_scaling_probe(const GaussianMeanModel& model, const ParamVec& theta_star,
                                        const ParamVec& theta_t, const std::vector<double>& sigmas, Index samples,
                                        std::uint64_t seed) {
    model.check_param(theta_star);
    model.check_param(theta_t);
    if (samples < 1) {
        throw DomainError("bias_scaling_probe: samples must be >= 1");
    }
    const Index d = model.param_dim();
    const DataMatrix xs = model.simulate(theta_star, samples, RngStream(seed));
    const Matrix<double>& precision = model.precision();

    Eigen::SelfAdjointEigenSolver<Matrix<double>> eig(precision, Eigen::EigenvaluesOnly);
    const double lipschitz = eig.eigenvalues().maxCoeff();
    double mean_ratio = 0.0;
    for (Index s = 0; s < samples; ++s) {
        const DataVec x = xs.row(s).transpose();
        mean_ratio += std::exp(model.log_density(theta_star, x) - model.log_density(theta_t, x));
    }
    mean_ratio /= static_cast<double>(samples);

    std::vector<BiasRow> rows;
    rows.reserve(sigmas.size());
    for (double sigma : sigmas) {
        if (!(sigma >= 0.0)) {
            throw DomainError("bias_scaling_probe: sigma must be nonnegative");
        }
        // (Sigma + s^2 I)^{-1} - Sigma^{-1} = -s^2 (Sigma + s^2 I)^{-1} Sigma^{-1}
        Matrix<double> smoothed = model.covariance();
        smoothed.diagonal().array() += sigma * sigma;
        const Matrix<double> gap = -(sigma * sigma) * smoothed.llt().solve(precision);
        double bias = 0.0;
        for (Index s = 0; s < samples; ++s) {
            bias += (gap * (xs.row(s).transpose() - theta_t)).norm();
        }
        BiasRow row;
        row.sigma = sigma;
        row.bias = bias / static_cast<double>(samples);
        row.lipschitz = lipschitz;
        row.mean_ratio = mean_ratio;
        row.bound = lipschitz * std::sqrt(static_cast<double>(d)) * sigma * mean_ratio;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace fsmle
