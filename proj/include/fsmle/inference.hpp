#pragma once

// Fisher information from per-sample score outer products and the Wald-type marginal
// intervals theta_i +- z * sqrt([I^-1]_ii / N).

#include "fsmle/core.hpp"
#include "fsmle/fsm.hpp"
#include "fsmle/model.hpp"
#include "fsmle/optimize.hpp"

#include <cstdint>
#include <vector>

namespace fsmle {

/// Inverse standard normal CDF. Rational initial guess refined by a Halley step (|error| < 1e-12).
[[nodiscard]] double normal_quantile(double p);

/// Average outer product of per-sample scores.
template <typename Derived>
[[nodiscard]] Matrix<typename Derived::Scalar> score_outer_product(const Eigen::MatrixBase<Derived>& scores) {
    using Scalar = typename Derived::Scalar;
    Matrix<Scalar> info = scores.transpose() * scores / static_cast<Scalar>(scores.rows());
    return (info + info.transpose()) / Scalar(2);
}

enum class ScoreSource { fsm, closed_form };

struct FisherInfoEstimate {
    Matrix<double> matrix;
    Index n_sim = 0;
    ParamVec theta_hat;
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    bool rank_deficient = false;
};

[[nodiscard]] FisherInfoEstimate make_fisher_info(Matrix<double> matrix, Index n_sim, ParamVec theta_hat);

/// Simulates n_sim samples at theta_hat and averages their score outer products. With the fsm
/// source the scores come from a local model fitted at theta_hat with `fsm` settings.
[[nodiscard]] FisherInfoEstimate estimate_fisher_info(const SimulatorModel& model, const ParamVec& theta_hat,
                                                      Index n_sim, ScoreSource source, const FsmSettings& fsm,
                                                      const RngStream& stream);

struct ConfidenceInterval {
    ParamVec lower;
    ParamVec upper;
    double level = 0.95;

    template <typename Derived>
    [[nodiscard]] Eigen::Array<bool, Eigen::Dynamic, 1> contains(const Eigen::MatrixBase<Derived>& theta) const {
        return (lower.array() <= theta.array()) && (theta.array() <= upper.array());
    }
};

[[nodiscard]] ConfidenceInterval confidence_interval(const ParamVec& center, const FisherInfoEstimate& info,
                                                     Index n_obs, double level);

struct CoverageSettings {
    OptConfig optimizer;
    Index fisher_sims = 100000;
    ScoreSource source = ScoreSource::fsm;
    FsmSettings fisher_fsm;  // local fit used for fsm-sourced scores
};

struct CoverageRun {
    ParamVec estimate;
    Eigen::Array<bool, Eigen::Dynamic, 1> contained;
    bool diverged = false;
};

struct CoverageResult {
    std::vector<CoverageRun> runs;
    Vector<double> per_coordinate;
    double averaged = 0.0;
    Index diverged = 0;
};

/// Repeats: fresh observations at theta_star, run_mle, Fisher information at the averaged
/// iterate, interval, containment of theta_star. Diverged runs are excluded.
[[nodiscard]] CoverageResult coverage_experiment(const SimulatorModel& model, const ParamVec& theta_star, Index n_obs,
                                                 Index runs, const CoverageSettings& settings, double level,
                                                 std::uint64_t seed, unsigned threads = 1);

}  // namespace fsmle
