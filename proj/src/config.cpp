#include "fsmle/config.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace fsmle {

using nlohmann::json;

namespace {

/// Typed access to one JSON object that remembers which keys were consumed, so that
/// leftovers can be reported as unknown.
class Block {
public:
    Block(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) {
            throw ConfigError(path_, "expected an object");
        }
    }

    ~Block() = default;
    Block(const Block&) = delete;
    Block& operator=(const Block&) = delete;

    [[nodiscard]] bool has(const std::string& key) {
        seen_.insert(key);
        return node_.contains(key) && !node_.at(key).is_null();
    }

    [[nodiscard]] std::string child_path(const std::string& key) const { return path_ + "/" + key; }
    [[nodiscard]] const json& raw(const std::string& key) const { return node_.at(key); }

    template <typename T>
    [[nodiscard]] T get(const std::string& key, T fallback) {
        if (!has(key)) {
            return fallback;
        }
        return convert<T>(node_.at(key), child_path(key));
    }

    template <typename T>
    [[nodiscard]] std::optional<T> optional(const std::string& key) {
        if (!has(key)) {
            return std::nullopt;
        }
        return convert<T>(node_.at(key), child_path(key));
    }

    void finish() const {
        for (const auto& [key, value] : node_.items()) {
            if (!seen_.contains(key)) {
                throw ConfigError(child_path(key), "unknown key");
            }
        }
    }

    template <typename T>
    static T convert(const json& v, const std::string& path) {
        if constexpr (std::is_same_v<T, double>) {
            if (!v.is_number()) throw ConfigError(path, "expected a number");
            return v.get<double>();
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, Index>) {
            if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
            return static_cast<Index>(v.get<std::int64_t>());
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
                throw ConfigError(path, "expected a nonnegative integer");
            }
            return v.get<std::uint64_t>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(path, "expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_same_v<T, ParamVec>) {
            if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a non-empty array of numbers");
            ParamVec out(static_cast<Index>(v.size()));
            for (std::size_t i = 0; i < v.size(); ++i) {
                out[static_cast<Index>(i)] = convert<double>(v[i], path + "/" + std::to_string(i));
            }
            return out;
        } else if constexpr (std::is_same_v<T, Matrix<double>> || std::is_same_v<T, DataMatrix>) {
            if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a non-empty array of rows");
            const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
            T out(static_cast<Index>(v.size()), static_cast<Index>(cols));
            for (std::size_t r = 0; r < v.size(); ++r) {
                const ParamVec row = convert<ParamVec>(v[r], path + "/" + std::to_string(r));
                if (static_cast<std::size_t>(row.size()) != cols) {
                    throw ConfigError(path + "/" + std::to_string(r), "ragged matrix row");
                }
                out.row(static_cast<Index>(r)) = row.transpose();
            }
            return out;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
            const ParamVec p = convert<ParamVec>(v, path);
            return std::vector<double>(p.data(), p.data() + p.size());
        } else if constexpr (std::is_same_v<T, std::vector<Index>>) {
            if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a non-empty array of integers");
            std::vector<Index> out;
            for (std::size_t i = 0; i < v.size(); ++i) {
                out.push_back(convert<Index>(v[i], path + "/" + std::to_string(i)));
            }
            return out;
        } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
            if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a non-empty array of strings");
            std::vector<std::string> out;
            for (std::size_t i = 0; i < v.size(); ++i) {
                out.push_back(convert<std::string>(v[i], path + "/" + std::to_string(i)));
            }
            return out;
        } else if constexpr (std::is_same_v<T, std::vector<HyperTuple>>) {
            if (!v.is_array() || v.empty()) throw ConfigError(path, "grid must be a non-empty array of pairs");
            std::vector<HyperTuple> out;
            for (std::size_t i = 0; i < v.size(); ++i) {
                const std::string p = path + "/" + std::to_string(i);
                const ParamVec pair = convert<ParamVec>(v[i], p);
                if (pair.size() != 2) throw ConfigError(p, "grid entries must be pairs");
                out.push_back({pair[0], pair[1]});
            }
            return out;
        } else {
            static_assert(sizeof(T) == 0, "unsupported config type");
        }
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

void positive(double v, const std::string& path) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(path, "must be positive and finite");
    }
}

void at_least(Index v, Index lo, const std::string& path) {
    if (v < lo) {
        throw ConfigError(path, "must be >= " + std::to_string(lo));
    }
}

template <typename Fn>
void block(const json& doc, const std::string& key, Fn&& fn) {
    if (doc.contains(key) && !doc.at(key).is_null()) {
        Block b(doc.at(key), "/" + key);
        fn(b);
        b.finish();
    }
}

void check_dim(const ParamVec& v, Index d, const std::string& path) {
    if (v.size() != d) {
        throw ConfigError(path, "expected length " + std::to_string(d) + ", got " + std::to_string(v.size()));
    }
}

}  // namespace

std::unique_ptr<SimulatorModel> make_model(const ModelSpec& spec) {
    if (spec.id == "gaussian") {
        if (spec.covariance) {
            return std::make_unique<GaussianMeanModel>(*spec.covariance);
        }
        return std::make_unique<GaussianMeanModel>(spec.dim);
    }
    if (spec.id == "shifted_exp") {
        return std::make_unique<ShiftedExponentialModel>(spec.rate);
    }
    throw ConfigError("/model/id", "unknown model '" + spec.id + "'");
}

Index RunConfig::param_dim() const {
    if (model.id == "shifted_exp") {
        return 1;
    }
    return model.covariance ? model.covariance->rows() : model.dim;
}

RunConfig parse_config(const json& doc) {
    if (!doc.is_object()) {
        throw ConfigError("", "config must be a JSON object");
    }
    static const std::set<std::string> top_level{"experiment", "seed",    "output", "model",    "data",
                                                 "method",     "optimizer", "grad", "runs",     "tune",
                                                 "coverage",   "bias_probe", "bench", "verify"};
    for (const auto& [key, value] : doc.items()) {
        if (!top_level.contains(key)) {
            throw ConfigError("/" + key, "unknown key");
        }
    }

    RunConfig cfg;
    cfg.document = doc;
    if (doc.contains("experiment")) {
        cfg.experiment = Block::convert<std::string>(doc.at("experiment"), "/experiment");
    }
    if (doc.contains("seed")) {
        cfg.seed = Block::convert<std::uint64_t>(doc.at("seed"), "/seed");
    }
    if (doc.contains("output")) {
        cfg.output = Block::convert<std::string>(doc.at("output"), "/output");
    }

    block(doc, "model", [&](Block& b) {
        cfg.model.id = b.get<std::string>("id", "gaussian");
        cfg.model.dim = b.get<Index>("dim", 2);
        at_least(cfg.model.dim, 1, "/model/dim");
        if (auto cov = b.optional<Matrix<double>>("covariance")) {
            cfg.model.covariance = *cov;
        }
        if (auto diag = b.optional<ParamVec>("covariance_diag")) {
            if (cfg.model.covariance) {
                throw ConfigError("/model/covariance_diag", "give either covariance or covariance_diag");
            }
            cfg.model.covariance = diag->asDiagonal().toDenseMatrix();
        }
        cfg.model.rate = b.get<double>("rate", 1.0);
        positive(cfg.model.rate, "/model/rate");
        if (cfg.model.id != "gaussian" && cfg.model.id != "shifted_exp") {
            throw ConfigError("/model/id", "unknown model '" + cfg.model.id + "'");
        }
    });
    try {
        (void)make_model(cfg.model);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("/model", e.what());
    }
    const Index d = cfg.param_dim();

    block(doc, "data", [&](Block& b) {
        cfg.data.theta_true = b.optional<ParamVec>("theta_true");
        if (cfg.data.theta_true) check_dim(*cfg.data.theta_true, d, "/data/theta_true");
        cfg.data.n_obs = b.get<Index>("n_obs", 10);
        at_least(cfg.data.n_obs, 1, "/data/n_obs");
        if (auto obs = b.optional<DataMatrix>("observations")) {
            if (obs->cols() != d) throw ConfigError("/data/observations", "row length must equal data dimension");
            cfg.data.observations = *obs;
        }
    });

    OptConfig& opt = cfg.optimizer;
    opt.theta0 = ParamVec::Zero(d);
    block(doc, "method", [&](Block& b) {
        const std::string id = b.get<std::string>("id", "fsm");
        if (id == "fsm") {
            opt.method = Method::fsm;
        } else if (id == "kdesp") {
            opt.method = Method::kdesp;
        } else {
            throw ConfigError("/method/id", "unknown method '" + id + "'");
        }
        opt.fsm.sigma = b.get<double>("sigma", 0.1);
        positive(opt.fsm.sigma, "/method/sigma");
        opt.fsm.m = b.get<Index>("m", 100);
        at_least(opt.fsm.m, 1, "/method/m");
        opt.fsm.n = b.get<Index>("n", 1);
        at_least(opt.fsm.n, 1, "/method/n");
        opt.fsm.fit.ridge = b.optional<double>("ridge");
        if (opt.fsm.fit.ridge && !(*opt.fsm.fit.ridge >= 0.0)) throw ConfigError("/method/ridge", "must be >= 0");
        opt.fsm.fit.affine = b.get<bool>("affine", true);
        opt.fsm.fit.standardize = b.get<bool>("standardize", false);

        opt.kdesp.a = b.get<double>("a", 1.0);
        positive(opt.kdesp.a, "/method/a");
        opt.kdesp.c = b.get<double>("c", 1.0);
        positive(opt.kdesp.c, "/method/c");
        opt.kdesp.alpha = b.get<double>("alpha", 1.0);
        opt.kdesp.gamma = b.get<double>("gamma", 1.0 / 6.0);
        opt.kdesp.A = b.optional<Index>("A");
        if (opt.kdesp.A) at_least(*opt.kdesp.A, 0, "/method/A");
        opt.kdesp.n_sim = b.get<Index>("n_sim", 50);
        at_least(opt.kdesp.n_sim, 2, "/method/n_sim");
        opt.kdesp.common_random_numbers = b.get<bool>("common_random_numbers", false);
        if (b.has("bandwidth")) {
            const json& bw = b.raw("bandwidth");
            if (bw.is_number()) {
                opt.kdesp.bandwidth = {BandwidthRule::fixed, bw.get<double>()};
                positive(opt.kdesp.bandwidth.h, "/method/bandwidth");
            } else {
                const std::string rule = Block::convert<std::string>(bw, "/method/bandwidth");
                if (rule == "silverman") {
                    opt.kdesp.bandwidth = {BandwidthRule::silverman, 0.0};
                } else if (rule == "scott") {
                    opt.kdesp.bandwidth = {BandwidthRule::scott, 0.0};
                } else {
                    throw ConfigError("/method/bandwidth", "expected silverman, scott or a positive number");
                }
            }
        }
    });
    if (opt.method == Method::kdesp) {
        opt.update_rule = UpdateRule::sgd;
    }

    block(doc, "optimizer", [&](Block& b) {
        const std::string rule = b.get<std::string>("rule", to_string(opt.update_rule));
        if (rule == "sgd") {
            opt.update_rule = UpdateRule::sgd;
        } else if (rule == "adam") {
            opt.update_rule = UpdateRule::adam;
        } else if (rule == "rmsprop") {
            opt.update_rule = UpdateRule::rmsprop;
        } else {
            throw ConfigError("/optimizer/rule", "expected sgd, adam or rmsprop");
        }
        opt.step_size = b.get<double>("eta", opt.step_size);
        positive(opt.step_size, "/optimizer/eta");
        opt.T = b.get<Index>("T", opt.T);
        at_least(opt.T, 0, "/optimizer/T");
        opt.avg_window = b.get<Index>("avg_window", std::min<Index>(opt.avg_window, std::max<Index>(opt.T, 1)));
        if (opt.avg_window < 1 || opt.avg_window > std::max<Index>(opt.T, 1)) {
            throw ConfigError("/optimizer/avg_window", "must lie in [1, max(T, 1)]");
        }
        if (auto t0 = b.optional<ParamVec>("theta0")) {
            check_dim(*t0, d, "/optimizer/theta0");
            opt.theta0 = *t0;
        }
    });
    opt.avg_window = std::min(opt.avg_window, std::max<Index>(opt.T, 1));
    if (opt.method == Method::kdesp && opt.update_rule != UpdateRule::sgd) {
        throw ConfigError("/optimizer/rule", "kdesp follows the SPSA gain schedule; use sgd");
    }

    block(doc, "grad", [&](Block& b) {
        GradSpec& g = cfg.grad;
        g.methods = b.get("methods", g.methods);
        for (const auto& m : g.methods) {
            if (m != "fsm" && m != "kdesp") throw ConfigError("/grad/methods", "unknown method '" + m + "'");
        }
        g.budgets = b.get("budgets", g.budgets);
        for (Index v : g.budgets) at_least(v, 2, "/grad/budgets");
        g.fsm_n = b.get<Index>("fsm_n", g.fsm_n);
        at_least(g.fsm_n, 1, "/grad/fsm_n");
        g.fsm_sigmas = b.get("fsm_sigmas", g.fsm_sigmas);
        for (double s : g.fsm_sigmas) positive(s, "/grad/fsm_sigmas");
        g.kdesp_cs = b.get("kdesp_cs", g.kdesp_cs);
        for (double c : g.kdesp_cs) positive(c, "/grad/kdesp_cs");
        g.repeats = b.get<Index>("repeats", g.repeats);
        at_least(g.repeats, 1, "/grad/repeats");
        g.offset = b.optional<ParamVec>("offset");
        if (g.offset) check_dim(*g.offset, d, "/grad/offset");
        g.reference = b.get<std::string>("reference", g.reference);
        if (g.reference != "smoothed" && g.reference != "closed_form") {
            throw ConfigError("/grad/reference", "expected smoothed or closed_form");
        }
    });

    block(doc, "runs", [&](Block& b) {
        cfg.runs.runs = b.get<Index>("runs", cfg.runs.runs);
        at_least(cfg.runs.runs, 1, "/runs/runs");
        if (b.has("tune_grid")) {
            cfg.runs.tune_grid = Block::convert<std::vector<HyperTuple>>(b.raw("tune_grid"), "/runs/tune_grid");
            if (cfg.runs.tune_grid.empty()) throw ConfigError("/runs/tune_grid", "must not be empty");
        }
        cfg.runs.validation_sims = b.get<Index>("validation_sims", cfg.runs.validation_sims);
        at_least(cfg.runs.validation_sims, 1, "/runs/validation_sims");
    });

    block(doc, "tune", [&](Block& b) {
        if (!b.has("grid")) throw ConfigError("/tune/grid", "required");
        cfg.tune.grid = Block::convert<std::vector<HyperTuple>>(b.raw("grid"), "/tune/grid");
        if (cfg.tune.grid.empty()) throw ConfigError("/tune/grid", "must not be empty");
        cfg.tune.validation_sims = b.get<Index>("validation_sims", cfg.tune.validation_sims);
        at_least(cfg.tune.validation_sims, 1, "/tune/validation_sims");
    });
    auto check_grid = [&](const std::vector<HyperTuple>& grid, const std::string& path) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            positive(grid[i].first, path + "/" + std::to_string(i) + "/0");
            positive(grid[i].second, path + "/" + std::to_string(i) + "/1");
        }
    };
    check_grid(cfg.runs.tune_grid, "/runs/tune_grid");
    check_grid(cfg.tune.grid, "/tune/grid");

    block(doc, "coverage", [&](Block& b) {
        CoverageSpec& c = cfg.coverage;
        c.runs = b.get<Index>("runs", c.runs);
        at_least(c.runs, 1, "/coverage/runs");
        c.level = b.get<double>("level", c.level);
        if (!(c.level > 0.0 && c.level < 1.0)) throw ConfigError("/coverage/level", "must lie in (0, 1)");
        c.fisher_sims = b.get<Index>("fisher_sims", c.fisher_sims);
        at_least(c.fisher_sims, 1, "/coverage/fisher_sims");
        const std::string source = b.get<std::string>("score_source", "fsm");
        if (source == "fsm") {
            c.source = ScoreSource::fsm;
        } else if (source == "closed_form") {
            c.source = ScoreSource::closed_form;
        } else {
            throw ConfigError("/coverage/score_source", "expected fsm or closed_form");
        }
        c.fisher_m = b.get<Index>("fisher_m", c.fisher_m);
        at_least(c.fisher_m, 1, "/coverage/fisher_m");
        c.fisher_n = b.get<Index>("fisher_n", c.fisher_n);
        at_least(c.fisher_n, 1, "/coverage/fisher_n");
        c.fisher_sigma = b.optional<double>("fisher_sigma");
        if (c.fisher_sigma) positive(*c.fisher_sigma, "/coverage/fisher_sigma");
    });

    block(doc, "bias_probe", [&](Block& b) {
        BiasSpec& s = cfg.bias_probe;
        s.sigmas = b.get("sigmas", s.sigmas);
        for (double v : s.sigmas) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("/bias_probe/sigmas", "must be >= 0");
        }
        s.samples = b.get<Index>("samples", s.samples);
        at_least(s.samples, 1, "/bias_probe/samples");
        s.theta_t = b.optional<ParamVec>("theta_t");
        if (s.theta_t) check_dim(*s.theta_t, d, "/bias_probe/theta_t");
    });

    block(doc, "bench", [&](Block& b) {
        BenchSpec& s = cfg.bench;
        s.methods = b.get("methods", s.methods);
        for (const auto& m : s.methods) {
            if (m != "fsm" && m != "kdesp") throw ConfigError("/bench/methods", "unknown method '" + m + "'");
        }
        // an axis may be empty so that a single cell can be timed
        auto axis = [&](const char* key, std::vector<Index> fallback) {
            if (b.has(key) && b.raw(key).is_array() && b.raw(key).empty()) return std::vector<Index>{};
            return b.get(key, fallback);
        };
        s.budgets = axis("budgets", s.budgets);
        for (Index v : s.budgets) at_least(v, 2, "/bench/budgets");
        s.dims = axis("dims", s.dims);
        for (Index v : s.dims) at_least(v, 1, "/bench/dims");
        if (s.budgets.empty() && s.dims.empty()) throw ConfigError("/bench", "budgets and dims are both empty");
        s.dim_budget = b.get<Index>("dim_budget", s.dim_budget);
        at_least(s.dim_budget, 2, "/bench/dim_budget");
        s.repetitions = b.get<Index>("repetitions", s.repetitions);
        at_least(s.repetitions, 1, "/bench/repetitions");
        s.fsm_n = b.get<Index>("fsm_n", s.fsm_n);
        at_least(s.fsm_n, 1, "/bench/fsm_n");
    });

    block(doc, "verify", [&](Block& b) {
        cfg.verify.trials = b.get<Index>("trials", cfg.verify.trials);
        at_least(cfg.verify.trials, 1, "/verify/trials");
    });

    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path, "cannot open config file");
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path, std::string("invalid JSON: ") + e.what());
    }
    return parse_config(doc);
}

std::string config_hash(const json& document) {
    const std::string canonical = document.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

}  // namespace fsmle
