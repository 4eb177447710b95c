#pragma once

// Run configuration: one JSON document, validated against a fixed schema before anything runs.

#include "fsmle/core.hpp"
#include "fsmle/inference.hpp"
#include "fsmle/kdesp.hpp"
#include "fsmle/model.hpp"
#include "fsmle/optimize.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsmle {

/// Schema violation; the message starts with the JSON path of the offending entry.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& path, const std::string& message)
        : std::runtime_error(path + ": " + message), path_(path) {}

    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

struct ModelSpec {
    std::string id = "gaussian";
    Index dim = 2;
    std::optional<Matrix<double>> covariance;  // gaussian; identity when unset
    double rate = 1.0;                         // shifted_exp
};

[[nodiscard]] std::unique_ptr<SimulatorModel> make_model(const ModelSpec& spec);

struct DataSpec {
    std::optional<ParamVec> theta_true;  // ones when unset
    Index n_obs = 10;
    std::optional<DataMatrix> observations;
};

struct GradSpec {
    std::vector<std::string> methods{"fsm", "kdesp"};
    std::vector<Index> budgets{100, 1000, 5000};  // total simulations per gradient
    Index fsm_n = 10;                             // simulations per proposal; m = budget / fsm_n
    std::vector<double> fsm_sigmas{0.1};
    std::vector<double> kdesp_cs{0.1};
    Index repeats = 100;
    std::optional<ParamVec> offset;     // theta_t = exact MLE + offset
    std::string reference = "smoothed";  // or closed_form
};

struct RunsSpec {
    Index runs = 1;
    std::vector<HyperTuple> tune_grid;  // per-run tuning when non-empty
    Index validation_sims = 1000;
};

struct TuneSpec {
    std::vector<HyperTuple> grid;
    Index validation_sims = 1000;
};

struct CoverageSpec {
    Index runs = 100;
    double level = 0.95;
    Index fisher_sims = 100000;
    ScoreSource source = ScoreSource::fsm;
    Index fisher_m = 1000;
    Index fisher_n = 10;
    std::optional<double> fisher_sigma;  // proposal scale of the local fit; the optimizer's when unset
};

struct BiasSpec {
    std::vector<double> sigmas{0.0, 0.01, 0.1, 0.5, 1.0};
    Index samples = 10000;
    std::optional<ParamVec> theta_t;  // theta_true when unset
};

struct BenchSpec {
    std::vector<std::string> methods{"fsm", "kdesp"};
    std::vector<Index> budgets{100, 1000, 10000};
    std::vector<Index> dims{2, 5, 10, 20};
    Index dim_budget = 1000;
    Index repetitions = 1000;
    Index fsm_n = 10;
};

struct VerifySpec {
    Index trials = 100;
};

struct RunConfig {
    std::string experiment;
    std::uint64_t seed = 0;
    std::string output = ".";
    ModelSpec model;
    DataSpec data;
    OptConfig optimizer;
    GradSpec grad;
    RunsSpec runs;
    TuneSpec tune;
    CoverageSpec coverage;
    BiasSpec bias_probe;
    BenchSpec bench;
    VerifySpec verify;
    nlohmann::json document;  // as parsed, used for hashing and echo

    /// Parameter dimension implied by the model block.
    [[nodiscard]] Index param_dim() const;
};

[[nodiscard]] RunConfig parse_config(const nlohmann::json& document);
[[nodiscard]] RunConfig load_config(const std::string& path);

/// FNV-1a of the canonical (key-sorted, compact) document, as 16 hex digits.
[[nodiscard]] std::string config_hash(const nlohmann::json& document);

}  // namespace fsmle
