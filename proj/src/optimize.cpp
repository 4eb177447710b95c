#include "fsmle/optimize.hpp"

#include <chrono>
#include <limits>

namespace fsmle {

std::string to_string(Method m) { return m == Method::fsm ? "fsm" : "kdesp"; }

std::string to_string(UpdateRule r) {
    switch (r) {
        case UpdateRule::sgd: return "sgd";
        case UpdateRule::adam: return "adam";
        case UpdateRule::rmsprop: return "rmsprop";
    }
    return "?";
}

Updater::Updater(UpdateRule rule, double step_size, Index dim, AdamParams adam, RmsPropParams rmsprop)
    : rule_(rule),
      step_size_(step_size),
      adam_(adam),
      rmsprop_(rmsprop),
      first_(Vector<double>::Zero(dim)),
      second_(Vector<double>::Zero(dim)) {}

Vector<double> Updater::step(const Vector<double>& g) { return step(g, step_size_); }

Vector<double> Updater::step(const Vector<double>& g, double step_size) {
    require_dim(g.size(), first_.size(), "gradient");
    ++count_;
    switch (rule_) {
        case UpdateRule::sgd:
            return step_size * g;
        case UpdateRule::adam: {
            first_ = adam_.beta1 * first_ + (1.0 - adam_.beta1) * g;
            second_ = adam_.beta2 * second_ + (1.0 - adam_.beta2) * g.cwiseAbs2();
            const double t = static_cast<double>(count_);
            const Vector<double> m_hat = first_ / (1.0 - std::pow(adam_.beta1, t));
            const Vector<double> v_hat = second_ / (1.0 - std::pow(adam_.beta2, t));
            return step_size * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + adam_.epsilon).matrix());
        }
        case UpdateRule::rmsprop:
            second_ = rmsprop_.decay * second_ + (1.0 - rmsprop_.decay) * g.cwiseAbs2();
            return step_size * g.cwiseQuotient((second_.cwiseSqrt().array() + rmsprop_.epsilon).matrix());
    }
    return Vector<double>::Zero(g.size());
}

void OptConfig::validate() const {
    if (T < 0) {
        throw DomainError("optimizer: T must be >= 0");
    }
    if (avg_window < 1 || avg_window > std::max<Index>(T, 1)) {
        throw DomainError("optimizer: avg_window must lie in [1, max(T, 1)]");
    }
    if (theta0.size() == 0) {
        throw DimensionError("optimizer: theta0 is empty");
    }
    require_finite(theta0, "theta0");
    if (method == Method::fsm) {
        if (!(step_size > 0.0) || !std::isfinite(step_size)) {
            throw DomainError("optimizer: step size must be positive");
        }
        fsm.validate();
    } else {
        if (update_rule != UpdateRule::sgd) {
            throw DomainError("optimizer: kdesp uses the SPSA gain schedule and requires update rule sgd");
        }
        kdesp.validate();
    }
}

namespace {

constexpr double divergence_norm = 1e6;

bool diverging(const ParamVec& theta) { return !theta.allFinite() || theta.norm() > divergence_norm; }

}  // namespace

OptTrace run_optimizer(const GradientFn& gradient, const OptConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const Index d = cfg.theta0.size();
    const RngStream master(seed);

    OptTrace trace;
    trace.seed = seed;
    trace.iterates.resize(cfg.T + 1, d);
    trace.gradients.resize(cfg.T, d);
    trace.iterates.row(0) = cfg.theta0.transpose();

    KdeSpConfig spsa = cfg.kdesp;
    spsa.T = cfg.T;
    Updater updater(cfg.update_rule, cfg.step_size, d);
    ParamVec theta = cfg.theta0;
    Index done = 0;
    for (Index t = 1; t <= cfg.T; ++t) {
        const auto start = std::chrono::steady_clock::now();
        const Vector<double> g = gradient(theta, t, master.child(static_cast<std::uint64_t>(t)));
        require_dim(g.size(), d, "gradient estimate");
        const Vector<double> delta =
            cfg.method == Method::kdesp ? updater.step(g, spsa_schedules(spsa, t).step) : updater.step(g);
        const ParamVec next = theta + delta;
        const auto stop = std::chrono::steady_clock::now();
        if (!g.allFinite() || diverging(next)) {
            trace.diverged = true;
            break;
        }
        theta = next;
        trace.gradients.row(t - 1) = g.transpose();
        trace.iterates.row(t) = theta.transpose();
        trace.wall_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
        done = t;
    }
    if (trace.diverged) {
        trace.iterates.conservativeResize(done + 1, d);
        trace.gradients.conservativeResize(done, d);
    }
    trace.averaged = polyak_average(trace.iterates, std::min(cfg.avg_window, trace.iterates.rows()));
    return trace;
}

OptTrace run_mle(const SimulatorModel& model, const DataMatrix& observations, const OptConfig& cfg,
                 std::uint64_t seed) {
    if (observations.rows() == 0) {
        throw DomainError("run_mle: no observations");
    }
    require_dim(observations.cols(), model.data_dim(), "observations");
    model.check_param(cfg.theta0);

    GradientFn gradient;
    if (cfg.method == Method::fsm) {
        gradient = [&](const ParamVec& theta, Index, const RngStream& stream) {
            return estimate_gradient(model, observations, theta, cfg.fsm, stream).gradient;
        };
    } else {
        KdeSpConfig spsa = cfg.kdesp;
        spsa.T = cfg.T;
        gradient = [&model, &observations, spsa](const ParamVec& theta, Index t, const RngStream& stream) {
            return spsa_gradient(model, theta, observations, spsa, t, stream);
        };
    }
    return run_optimizer(gradient, cfg, seed);
}

OptConfig apply_tuple(const OptConfig& base, const HyperTuple& tuple) {
    OptConfig cfg = base;
    if (base.method == Method::fsm) {
        cfg.fsm.sigma = tuple.first;
        cfg.step_size = tuple.second;
    } else {
        cfg.kdesp.a = tuple.first;
        cfg.kdesp.c = tuple.second;
    }
    return cfg;
}

Index trial_iterations(Index T) { return std::max<Index>(20, T / 5); }

TuneResult tune_grid(const SimulatorModel& model, const DataMatrix& observations, const OptConfig& base,
                     const std::vector<HyperTuple>& grid, std::uint64_t seed, Index validation_sims) {
    if (grid.empty()) {
        throw DomainError("tune_grid: empty grid");
    }
    if (validation_sims < 1) {
        throw DomainError("tune_grid: validation_sims must be >= 1");
    }
    const RngStream master(seed);
    const std::uint64_t trial_seed = master.child(0).key();
    const RngStream validation = master.child(1);
    const Vector<double> observed_mean = observations.colwise().mean().transpose();

    TuneResult result;
    result.table.reserve(grid.size());
    for (const HyperTuple& tuple : grid) {
        OptConfig cfg = apply_tuple(base, tuple);
        cfg.T = trial_iterations(base.T);
        cfg.avg_window = std::min(base.avg_window, cfg.T);
        TuneRow row;
        row.tuple = tuple;
        const OptTrace trace = run_mle(model, observations, cfg, trial_seed);
        row.diverged = trace.diverged;
        row.estimate = trace.averaged;
        if (trace.diverged) {
            row.score = std::numeric_limits<double>::infinity();
        } else {
            const DataMatrix sims = model.simulate(trace.averaged, validation_sims, validation);
            row.score = (sims.colwise().mean().transpose() - observed_mean).squaredNorm();
        }
        result.table.push_back(std::move(row));
    }

    bool any = false;
    for (std::size_t i = 0; i < result.table.size(); ++i) {
        const TuneRow& row = result.table[i];
        if (row.diverged) {
            continue;
        }
        if (!any || row.score < result.table[static_cast<std::size_t>(result.best)].score) {
            result.best = static_cast<Index>(i);
            any = true;
        }
    }
    if (!any) {
        std::string status = "tune_grid: every grid cell diverged:";
        for (const TuneRow& row : result.table) {
            status += " (" + std::to_string(row.tuple.first) + ", " + std::to_string(row.tuple.second) + ")=diverged";
        }
        throw DivergenceError(status);
    }
    return result;
}

}  // namespace fsmle
