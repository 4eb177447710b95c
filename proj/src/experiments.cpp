#include "fsmle/experiments.hpp"

#include "fsmle/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace fsmle {

double median(std::vector<double> values) {
    if (values.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) {
        return upper;
    }
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

namespace {

double quantile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ParamVec exact_mle_or_throw(const SimulatorModel& model, const DataMatrix& obs) {
    auto mle = model.exact_mle(obs);
    if (!mle) {
        throw UnsupportedError("model '" + model.id() + "' has no exact MLE");
    }
    return *mle;
}

const GaussianMeanModel& as_gaussian(const SimulatorModel& model, const char* what) {
    const auto* g = dynamic_cast<const GaussianMeanModel*>(&model);
    if (g == nullptr) {
        throw UnsupportedError(std::string(what) + " requires the gaussian model");
    }
    return *g;
}

}  // namespace

ParamVec theta_true_of(const RunConfig& cfg) {
    return cfg.data.theta_true ? *cfg.data.theta_true : ParamVec(ParamVec::Ones(cfg.param_dim()));
}

Problem make_problem(const RunConfig& cfg, const RngStream& data_stream) {
    Problem p;
    p.model = make_model(cfg.model);
    p.theta_true = theta_true_of(cfg);
    p.observations = cfg.data.observations ? *cfg.data.observations
                                           : p.model->simulate(p.theta_true, cfg.data.n_obs, data_stream);
    return p;
}

GradResult run_grad(const RunConfig& cfg, unsigned threads) {
    const RngStream master(cfg.seed);
    const Problem problem = make_problem(cfg, master.child(0));
    const SimulatorModel& model = *problem.model;
    if (!model.has_closed_form_score()) {
        throw UnsupportedError("grad needs an oracle-capable model");
    }
    const GradSpec& spec = cfg.grad;

    GradResult result;
    result.center = exact_mle_or_throw(model, problem.observations);
    if (spec.offset) {
        result.center += *spec.offset;
    }
    const Index d = model.param_dim();
    const DataMatrix& obs = problem.observations;

    Vector<double> closed_form = Vector<double>::Zero(d);
    for (Index i = 0; i < obs.rows(); ++i) {
        closed_form += model.closed_form_score(result.center, obs.row(i).transpose());
    }
    auto reference_for = [&](const std::string& method, double sigma) -> Vector<double> {
        if (method != "fsm" || spec.reference == "closed_form") {
            return closed_form;
        }
        const auto& gaussian = as_gaussian(model, "smoothed reference");
        Vector<double> ref = Vector<double>::Zero(d);
        for (Index i = 0; i < obs.rows(); ++i) {
            ref += smoothed_grad_exact(gaussian.covariance(), sigma, result.center, obs.row(i).transpose());
        }
        return ref;
    };

    for (const std::string& method : spec.methods) {
        const std::vector<double>& hypers = method == "fsm" ? spec.fsm_sigmas : spec.kdesp_cs;
        for (Index budget : spec.budgets) {
            for (double hyper : hypers) {
                GradCell cell;
                cell.method = method;
                cell.budget = budget;
                cell.hyper = hyper;
                cell.repeats = spec.repeats;
                cell.errors.resize(static_cast<std::size_t>(spec.repeats));
                std::vector<double> relative(cell.errors.size());
                const Vector<double> reference = reference_for(method, hyper);
                const double ref_norm = reference.norm();

                FsmSettings fsm = cfg.optimizer.fsm;
                fsm.sigma = hyper;
                fsm.n = std::min(spec.fsm_n, budget);
                fsm.m = std::max<Index>(1, budget / fsm.n);
                KdeSpConfig kde = cfg.optimizer.kdesp;
                kde.c = hyper;
                kde.n_sim = std::max<Index>(2, budget / 2);

                const std::uint64_t method_id = method == "fsm" ? 1 : 2;
                parallel_for(cell.errors.size(), threads, [&](std::size_t r) {
                    const RngStream stream = master.child({method_id, static_cast<std::uint64_t>(r)});
                    const Vector<double> g = method == "fsm"
                                                 ? estimate_gradient(model, obs, result.center, fsm, stream).gradient
                                                 : spsa_gradient(model, result.center, obs, kde, 1, stream);
                    cell.errors[r] = (g - reference).norm();
                    relative[r] = ref_norm > 0.0 ? cell.errors[r] / ref_norm : std::numeric_limits<double>::infinity();
                });

                double sum = 0.0;
                for (double e : cell.errors) sum += e;
                cell.mean_error = sum / static_cast<double>(cell.errors.size());
                double ss = 0.0;
                for (double e : cell.errors) ss += (e - cell.mean_error) * (e - cell.mean_error);
                const double n = static_cast<double>(cell.errors.size());
                cell.ci_half_width = n > 1 ? normal_quantile(0.975) * std::sqrt(ss / (n - 1.0) / n) : 0.0;
                cell.median_relative_error = median(relative);
                result.cells.push_back(std::move(cell));
            }
        }
    }
    return result;
}

OptimizeResult run_optimize(const RunConfig& cfg, unsigned threads) {
    const RngStream master(cfg.seed);
    OptimizeResult result;
    result.runs.resize(static_cast<std::size_t>(cfg.runs.runs));

    parallel_for(result.runs.size(), threads, [&](std::size_t r) {
        const auto run = static_cast<std::uint64_t>(r);
        const Problem problem = make_problem(cfg, master.child({run, 0}));
        RunOutcome& out = result.runs[r];
        OptConfig opt = cfg.optimizer;
        out.exact_mle = problem.model->exact_mle(problem.observations).value_or(ParamVec());
        if (!cfg.runs.tune_grid.empty()) {
            try {
                const TuneResult tuned = tune_grid(*problem.model, problem.observations, opt, cfg.runs.tune_grid,
                                                   master.child({run, 1}).key(), cfg.runs.validation_sims);
                out.tuned = tuned.best_tuple();
                opt = apply_tuple(opt, *out.tuned);
            } catch (const DivergenceError&) {
                out.tune_failed = true;
                out.trace.iterates = opt.theta0.transpose();
                out.trace.gradients.resize(0, opt.theta0.size());
                out.trace.averaged = opt.theta0;
                out.trace.diverged = true;
                out.error = std::numeric_limits<double>::infinity();
                return;
            }
        }
        out.trace = run_mle(*problem.model, problem.observations, opt, master.child({run, 2}).key());
        if (out.trace.diverged) {
            out.error = std::numeric_limits<double>::infinity();
        } else {
            out.error = out.exact_mle.size() > 0 ? (out.trace.averaged - out.exact_mle).norm()
                                                 : std::numeric_limits<double>::quiet_NaN();
        }
    });

    std::vector<double> errors;
    for (const RunOutcome& run : result.runs) {
        result.diverged += run.trace.diverged ? 1 : 0;
        errors.push_back(run.error);
    }
    result.median_error = median(errors);
    return result;
}

TuneResult run_tune(const RunConfig& cfg) {
    if (cfg.tune.grid.empty()) {
        throw ConfigError("/tune/grid", "required");
    }
    const RngStream master(cfg.seed);
    const Problem problem = make_problem(cfg, master.child(0));
    return tune_grid(*problem.model, problem.observations, cfg.optimizer, cfg.tune.grid, master.child(1).key(),
                     cfg.tune.validation_sims);
}

CoverageSettings coverage_settings(const RunConfig& cfg) {
    CoverageSettings s;
    s.optimizer = cfg.optimizer;
    s.fisher_sims = cfg.coverage.fisher_sims;
    s.source = cfg.coverage.source;
    s.fisher_fsm = cfg.optimizer.fsm;
    s.fisher_fsm.m = cfg.coverage.fisher_m;
    s.fisher_fsm.n = cfg.coverage.fisher_n;
    if (cfg.coverage.fisher_sigma) {
        s.fisher_fsm.sigma = *cfg.coverage.fisher_sigma;
    }
    return s;
}

CoverageResult run_coverage(const RunConfig& cfg, unsigned threads) {
    const auto model = make_model(cfg.model);
    return coverage_experiment(*model, theta_true_of(cfg), cfg.data.n_obs, cfg.coverage.runs, coverage_settings(cfg),
                               cfg.coverage.level, cfg.seed, threads);
}

std::vector<BiasRow> run_bias_probe(const RunConfig& cfg) {
    const auto model = make_model(cfg.model);
    const auto& gaussian = as_gaussian(*model, "bias-probe");
    const ParamVec theta_star = theta_true_of(cfg);
    const ParamVec theta_t = cfg.bias_probe.theta_t ? *cfg.bias_probe.theta_t : theta_star;
    return bias_scaling_probe(gaussian, theta_star, theta_t, cfg.bias_probe.sigmas, cfg.bias_probe.samples, cfg.seed);
}

std::vector<BenchRow> run_bench(const RunConfig& cfg) {
    const RngStream master(cfg.seed);
    const BenchSpec& spec = cfg.bench;
    std::vector<BenchRow> rows;

    auto time_cell = [&](const std::string& method, const std::string& axis, Index value, Index dim, Index budget,
                         std::uint64_t cell) {
        const GaussianMeanModel model(dim);
        const DataMatrix obs = model.simulate(ParamVec::Ones(dim), 10, master.child({cell, 0}));
        const ParamVec center = *model.exact_mle(obs);
        FsmSettings fsm = cfg.optimizer.fsm;
        fsm.n = std::min(spec.fsm_n, budget);
        fsm.m = std::max<Index>(1, budget / fsm.n);
        KdeSpConfig kde = cfg.optimizer.kdesp;
        kde.n_sim = std::max<Index>(2, budget / 2);

        std::vector<double> ms;
        ms.reserve(static_cast<std::size_t>(spec.repetitions));
        double norm_sum = 0.0;
        for (Index r = 0; r < spec.repetitions; ++r) {
            const RngStream stream = master.child({cell, 1, static_cast<std::uint64_t>(r)});
            const auto start = std::chrono::steady_clock::now();
            const Vector<double> g = method == "fsm" ? estimate_gradient(model, obs, center, fsm, stream).gradient
                                                     : spsa_gradient(model, center, obs, kde, 1, stream);
            const auto stop = std::chrono::steady_clock::now();
            ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
            norm_sum += g.norm();
        }
        BenchRow row;
        row.method = method;
        row.axis = axis;
        row.value = value;
        row.repetitions = spec.repetitions;
        row.mean_grad_norm = norm_sum / static_cast<double>(spec.repetitions);
        row.median_ms = median(ms);
        row.iqr_ms = quantile(ms, 0.75) - quantile(ms, 0.25);
        rows.push_back(row);
    };

    std::uint64_t cell = 0;
    for (const std::string& method : spec.methods) {
        for (Index budget : spec.budgets) {
            time_cell(method, "budget", budget, 2, budget, cell++);
        }
        for (Index dim : spec.dims) {
            time_cell(method, "dim", dim, dim, spec.dim_budget, cell++);
        }
    }
    return rows;
}

}  // namespace fsmle
