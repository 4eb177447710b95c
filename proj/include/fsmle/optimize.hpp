#pragma once

#include "fsmle/core.hpp"
#include "fsmle/fsm.hpp"
#include "fsmle/kdesp.hpp"
#include "fsmle/model.hpp"
#include "fsmle/rng.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fsmle {

enum class Method { fsm, kdesp };
enum class UpdateRule { sgd, adam, rmsprop };

[[nodiscard]] std::string to_string(Method m);
[[nodiscard]] std::string to_string(UpdateRule r);

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct RmsPropParams {
    double decay = 0.9;
    double epsilon = 1e-8;
};

/// First-order ascent step. Stateful for adam and rmsprop.
class Updater {
public:
    Updater(UpdateRule rule, double step_size, Index dim, AdamParams adam = {}, RmsPropParams rmsprop = {});

    /// Increment to add to the iterate for gradient g.
    [[nodiscard]] Vector<double> step(const Vector<double>& g);
    /// Same as step() but with an explicit step size for this call (SPSA gains).
    [[nodiscard]] Vector<double> step(const Vector<double>& g, double step_size);

private:
    UpdateRule rule_;
    double step_size_;
    AdamParams adam_;
    RmsPropParams rmsprop_;
    Vector<double> first_;
    Vector<double> second_;
    Index count_ = 0;
};

struct OptConfig {
    Method method = Method::fsm;
    UpdateRule update_rule = UpdateRule::adam;
    double step_size = 1e-2;
    Index T = 100;
    Index avg_window = 50;
    ParamVec theta0;
    FsmSettings fsm;
    KdeSpConfig kdesp;

    void validate() const;
};

struct OptTrace {
    Matrix<double> iterates;   // (completed + 1) x d, row 0 is theta0
    Matrix<double> gradients;  // completed x d
    ParamVec averaged;
    std::vector<double> wall_ms;
    std::uint64_t seed = 0;
    bool diverged = false;

    [[nodiscard]] Index completed() const noexcept { return gradients.rows(); }
};

/// Gradient estimate at theta for iteration t (1-based) from its own stream.
using GradientFn = std::function<Vector<double>(const ParamVec& theta, Index t, const RngStream& stream)>;

/// Mean of the last `window` rows.
template <typename Derived>
[[nodiscard]] Vector<typename Derived::Scalar> polyak_average(const Eigen::MatrixBase<Derived>& iterates, Index window) {
    if (window < 1) {
        throw DomainError("polyak_average: window must be >= 1");
    }
    if (window > iterates.rows()) {
        throw DomainError("polyak_average: window exceeds the number of iterates");
    }
    return iterates.bottomRows(window).colwise().mean().transpose();
}

/// Runs T ascent steps theta += update(gradient). Stops early, flagging divergence, when an
/// iterate becomes non-finite or its norm exceeds 1e6. Gains for KDE-SP follow its schedule.
[[nodiscard]] OptTrace run_optimizer(const GradientFn& gradient, const OptConfig& cfg, std::uint64_t seed);

/// FSM-MLE (or KDE-SP) on observed data; the estimator is re-fit at every iterate.
[[nodiscard]] OptTrace run_mle(const SimulatorModel& model, const DataMatrix& observations, const OptConfig& cfg,
                               std::uint64_t seed);

/// A grid cell: (sigma, eta) for fsm, (a, c) for kdesp.
struct HyperTuple {
    double first = 0.0;
    double second = 0.0;
};

struct TuneRow {
    HyperTuple tuple;
    double score = 0.0;
    bool diverged = false;
    ParamVec estimate;
};

struct TuneResult {
    std::vector<TuneRow> table;
    Index best = 0;

    [[nodiscard]] const HyperTuple& best_tuple() const { return table.at(static_cast<std::size_t>(best)).tuple; }
};

[[nodiscard]] OptConfig apply_tuple(const OptConfig& base, const HyperTuple& tuple);

[[nodiscard]] Index trial_iterations(Index T);

/// Short trial runs per cell, scored by squared distance between the mean of fresh simulations
/// at the trial estimate and the observed mean. Ties resolve to the earliest cell.
[[nodiscard]] TuneResult tune_grid(const SimulatorModel& model, const DataMatrix& observations, const OptConfig& base,
                                   const std::vector<HyperTuple>& grid, std::uint64_t seed,
                                   Index validation_sims = 1000);

}  // namespace fsmle
