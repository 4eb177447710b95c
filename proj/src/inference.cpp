#include "fsmle/inference.hpp"

#include "fsmle/parallel.hpp"

#include <array>
#include <cmath>
#include <iostream>
#include <numbers>

namespace fsmle {

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw DomainError("normal_quantile: p must lie in (0, 1)");
    }
    // Acklam's rational approximation
    static constexpr std::array<double, 6> a{-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr std::array<double, 5> b{-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                             6.680131188771972e+01, -1.328068155288572e+01};
    static constexpr std::array<double, 6> c{-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr std::array<double, 4> d{7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                             3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    auto tail = [&](double q) {
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    };

    double x = 0.0;
    if (p < p_low) {
        x = tail(std::sqrt(-2.0 * std::log(p)));
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        x = -tail(std::sqrt(-2.0 * std::log1p(-p)));
    }

    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

FisherInfoEstimate make_fisher_info(Matrix<double> matrix, Index n_sim, ParamVec theta_hat) {
    FisherInfoEstimate out;
    out.matrix = (matrix + matrix.transpose()) / 2.0;
    out.n_sim = n_sim;
    out.theta_hat = std::move(theta_hat);
    Eigen::SelfAdjointEigenSolver<Matrix<double>> eig(out.matrix, Eigen::EigenvaluesOnly);
    out.min_eigenvalue = eig.eigenvalues().minCoeff();
    out.max_eigenvalue = eig.eigenvalues().maxCoeff();
    out.rank_deficient = !(out.min_eigenvalue > 1e-10 * std::max(out.max_eigenvalue, 0.0)) || out.max_eigenvalue <= 0.0;
    return out;
}

FisherInfoEstimate estimate_fisher_info(const SimulatorModel& model, const ParamVec& theta_hat, Index n_sim,
                                        ScoreSource source, const FsmSettings& fsm, const RngStream& stream) {
    model.check_param(theta_hat);
    if (n_sim < 1) {
        throw DomainError("estimate_fisher_info: n_sim must be >= 1");
    }
    const DataMatrix sims = model.simulate(theta_hat, n_sim, stream.child(0));
    Matrix<double> scores(n_sim, model.param_dim());
    if (source == ScoreSource::closed_form) {
        if (!model.has_closed_form_score()) {
            throw UnsupportedError("estimate_fisher_info: model has no closed-form score");
        }
        for (Index i = 0; i < n_sim; ++i) {
            scores.row(i) = model.closed_form_score(theta_hat, sims.row(i).transpose()).transpose();
        }
    } else {
        const LinearScoreModel fitted = fit_local_score(model, theta_hat, fsm, stream.child(1));
        scores = evaluate_scores(fitted, sims);
    }
    FisherInfoEstimate info = make_fisher_info(score_outer_product(scores), n_sim, theta_hat);
    if (info.rank_deficient) {
        std::cerr << "warning: Fisher information estimate is rank deficient (smallest eigenvalue "
                  << info.min_eigenvalue << ")\n";
    }
    return info;
}

ConfidenceInterval confidence_interval(const ParamVec& center, const FisherInfoEstimate& info, Index n_obs,
                                       double level) {
    if (!(level > 0.0 && level < 1.0)) {
        throw DomainError("confidence_interval: level must lie in (0, 1)");
    }
    if (n_obs < 1) {
        throw DomainError("confidence_interval: n_obs must be >= 1");
    }
    require_dim(info.matrix.rows(), center.size(), "fisher information");
    Eigen::SelfAdjointEigenSolver<Matrix<double>> eig(info.matrix, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(hi > 0.0) || !(lo > 1e-10 * hi)) {
        throw SingularMatrixError(
            "confidence_interval: Fisher information is singular; increase n_sim or add a ridge to the estimate",
            lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity());
    }
    const Index d = center.size();
    Eigen::LLT<Matrix<double>> llt(info.matrix);
    Matrix<double> inverse;
    if (llt.info() == Eigen::Success) {
        inverse = llt.solve(Matrix<double>::Identity(d, d));
    } else {
        detail::warn("confidence_interval: Cholesky factorization failed, using least-squares inverse");
        inverse = info.matrix.completeOrthogonalDecomposition().pseudoInverse();
    }
    const double z = normal_quantile(0.5 * (1.0 + level));
    const Vector<double> half = z * (inverse.diagonal() / static_cast<double>(n_obs)).cwiseSqrt();
    return {center - half, center + half, level};
}

CoverageResult coverage_experiment(const SimulatorModel& model, const ParamVec& theta_star, Index n_obs, Index runs,
                                   const CoverageSettings& settings, double level, std::uint64_t seed,
                                   unsigned threads) {
    if (runs < 1) {
        throw DomainError("coverage_experiment: runs must be >= 1");
    }
    model.check_param(theta_star);
    const RngStream master(seed);
    CoverageResult result;
    result.runs.resize(static_cast<std::size_t>(runs));

    parallel_for(static_cast<std::size_t>(runs), threads, [&](std::size_t r) {
        const auto run = static_cast<std::uint64_t>(r);
        CoverageRun& out = result.runs[r];
        const DataMatrix observations = model.simulate(theta_star, n_obs, master.child({run, 0}));
        const OptTrace trace = run_mle(model, observations, settings.optimizer, master.child({run, 1}).key());
        out.estimate = trace.averaged;
        out.diverged = trace.diverged;
        if (trace.diverged) {
            out.contained = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(theta_star.size(), false);
            return;
        }
        const FisherInfoEstimate info = estimate_fisher_info(model, trace.averaged, settings.fisher_sims,
                                                             settings.source, settings.fisher_fsm,
                                                             master.child({run, 2}));
        out.contained = confidence_interval(trace.averaged, info, n_obs, level).contains(theta_star);
    });

    const Index d = theta_star.size();
    result.per_coordinate = Vector<double>::Zero(d);
    Index used = 0;
    for (const CoverageRun& run : result.runs) {
        if (run.diverged) {
            ++result.diverged;
            continue;
        }
        ++used;
        result.per_coordinate += run.contained.cast<double>().matrix();
    }
    if (result.diverged > 0) {
        std::cerr << "warning: " << result.diverged << " coverage runs diverged and were excluded\n";
    }
    if (used == 0) {
        throw std::runtime_error("coverage_experiment: every run diverged");
    }
    result.per_coordinate /= static_cast<double>(used);
    result.averaged = result.per_coordinate.mean();
    return result;
}

}  // namespace fsmle
