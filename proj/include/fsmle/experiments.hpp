#pragma once

// Experiment drivers behind the CLI subcommands. Every driver is a pure function of the
// run configuration: per-cell and per-run streams are derived from the master seed.

#include "fsmle/config.hpp"
#include "fsmle/inference.hpp"
#include "fsmle/oracles.hpp"
#include "fsmle/optimize.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fsmle {

struct Problem {
    std::unique_ptr<SimulatorModel> model;
    DataMatrix observations;
    ParamVec theta_true;
};

/// Model from the config plus observations: the configured ones, or n_obs draws at theta_true.
[[nodiscard]] Problem make_problem(const RunConfig& cfg, const RngStream& data_stream);

[[nodiscard]] ParamVec theta_true_of(const RunConfig& cfg);

// --- grad -------------------------------------------------------------------

struct GradCell {
    std::string method;
    Index budget = 0;
    double hyper = 0.0;  // sigma for fsm, c for kdesp
    Index repeats = 0;
    double mean_error = 0.0;
    double ci_half_width = 0.0;
    double median_relative_error = 0.0;
    std::vector<double> errors;
};

struct GradResult {
    ParamVec center;
    std::vector<GradCell> cells;
};

/// Repeated gradient estimates at the exact MLE (+ offset) against the analytic reference.
[[nodiscard]] GradResult run_grad(const RunConfig& cfg, unsigned threads = 1);

// --- optimize ----------------------------------------------------------------

struct RunOutcome {
    OptTrace trace;
    std::optional<HyperTuple> tuned;
    ParamVec exact_mle;
    bool tune_failed = false;  // every grid cell diverged; no run was made
    double error = 0.0;        // |averaged - exact MLE|, +inf for a diverged run
};

struct OptimizeResult {
    std::vector<RunOutcome> runs;
    double median_error = 0.0;  // over all runs, so failures count as +inf
    Index diverged = 0;
};

[[nodiscard]] OptimizeResult run_optimize(const RunConfig& cfg, unsigned threads = 1);

// --- tune / coverage / bias ---------------------------------------------------

[[nodiscard]] TuneResult run_tune(const RunConfig& cfg);

[[nodiscard]] CoverageSettings coverage_settings(const RunConfig& cfg);
[[nodiscard]] CoverageResult run_coverage(const RunConfig& cfg, unsigned threads = 1);

[[nodiscard]] std::vector<BiasRow> run_bias_probe(const RunConfig& cfg);

// --- bench ------------------------------------------------------------------

struct BenchRow {
    std::string method;
    std::string axis;  // "budget" or "dim"
    Index value = 0;
    Index repetitions = 0;
    double mean_grad_norm = 0.0;
    double median_ms = 0.0;
    double iqr_ms = 0.0;
};

/// Wall-clock per gradient estimate. Timings are machine dependent; mean_grad_norm is not.
[[nodiscard]] std::vector<BenchRow> run_bench(const RunConfig& cfg);

[[nodiscard]] double median(std::vector<double> values);

}  // namespace fsmle
