#include "fsmle/fsm.hpp"

#include <iostream>
#include <random>

namespace fsmle {

namespace detail {
void warn(const std::string& message) { std::cerr << "warning: " << message << '\n'; }
}  // namespace detail

void ProposalSpec::validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw DomainError("proposal sigma must be positive and finite");
    }
    require_finite(center, "proposal center");
}

void FsmSettings::validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw DomainError("fsm sigma must be positive and finite");
    }
    if (m < 1 || n < 1) {
        throw DomainError("fsm budget requires m >= 1 and n >= 1");
    }
    if (fit.ridge && !(*fit.ridge >= 0.0)) {
        throw DomainError("fsm ridge must be nonnegative");
    }
}

SimBatch sample_batch(const SimulatorModel& model, const ProposalSpec& proposal, Index m, Index n,
                      const RngStream& stream) {
    proposal.validate();
    model.check_param(proposal.center);
    if (m < 1 || n < 1) {
        throw DomainError("sample_batch requires m >= 1 and n >= 1");
    }
    const Index d = model.param_dim();
    SimBatch batch;
    batch.thetas.resize(m, d);
    batch.data.resize(m * n, model.data_dim());
    batch.n_per_proposal = n;
    batch.center = proposal.center;
    batch.sigma = proposal.sigma;

    ParamVec theta(d);
    for (Index j = 0; j < m; ++j) {
        RngStream draw = stream.child({0, static_cast<std::uint64_t>(j)});
        std::normal_distribution<double> normal;
        for (Index i = 0; i < d; ++i) {
            theta[i] = proposal.center[i] + proposal.sigma * normal(draw);
        }
        batch.thetas.row(j) = theta.transpose();
        model.simulate_into(theta, batch.data.middleRows(j * n, n), stream.child({1, static_cast<std::uint64_t>(j)}));
    }
    return batch;
}

LinearScoreModel fit_local_score(const SimulatorModel& model, const ParamVec& center, const FsmSettings& settings,
                                 const RngStream& stream) {
    settings.validate();
    const SimBatch batch = sample_batch(model, ProposalSpec{center, settings.sigma}, settings.m, settings.n, stream);
    return fit_linear_fsm(batch, settings.fit);
}

GradEstimate estimate_gradient(const SimulatorModel& model, const DataMatrix& observations, const ParamVec& center,
                               const FsmSettings& settings, const RngStream& stream) {
    if (observations.rows() == 0) {
        throw DomainError("estimate_gradient: no observations");
    }
    require_dim(observations.cols(), model.data_dim(), "observations");
    const LinearScoreModel fitted = fit_local_score(model, center, settings, stream);

    GradEstimate out;
    out.per_observation_scores = evaluate_scores(fitted, observations);
    out.gradient = out.per_observation_scores.colwise().sum().transpose();
    out.gram_condition = fitted.gram_condition;
    out.m = settings.m;
    out.n = settings.n;
    out.sigma = settings.sigma;
    return out;
}

}  // namespace fsmle
