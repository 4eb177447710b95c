#include "fsmle/cli.hpp"

#include "fsmle/config.hpp"
#include "fsmle/experiments.hpp"
#include "fsmle/verify.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <locale>
#include <sstream>

namespace fsmle {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream out;
    out.imbue(std::locale::classic());
    out.precision(15);
    out << v;
    if (std::stod(out.str()) != v) {
        out.str("");
        out.precision(17);
        out << v;
    }
    return out.str();
}

/// Locale-independent CSV with a leading config_hash column.
class CsvWriter {
public:
    CsvWriter(const fs::path& path, std::string hash, const std::vector<std::string>& columns)
        : out_(path, std::ios::binary), hash_(std::move(hash)) {
        if (!out_) {
            throw std::runtime_error("cannot write " + path.string());
        }
        out_ << "config_hash";
        for (const auto& c : columns) out_ << ',' << c;
        out_ << '\n';
    }

    CsvWriter& row() {
        if (open_) out_ << '\n';
        out_ << hash_;
        open_ = true;
        return *this;
    }
    CsvWriter& operator<<(const std::string& v) {
        out_ << ',' << v;
        return *this;
    }
    CsvWriter& operator<<(const char* v) { return *this << std::string(v); }
    CsvWriter& operator<<(double v) { return *this << format_number(v); }
    CsvWriter& operator<<(Index v) { return *this << std::to_string(v); }
    CsvWriter& operator<<(bool v) { return *this << std::string(v ? "1" : "0"); }
    template <typename Derived>
    CsvWriter& operator<<(const Eigen::DenseBase<Derived>& v) {
        for (Index i = 0; i < v.size(); ++i) *this << static_cast<double>(v(i));
        return *this;
    }

    ~CsvWriter() {
        if (open_) out_ << '\n';
    }

private:
    std::ofstream out_;
    std::string hash_;
    bool open_ = false;
};

/// Header-only writer for files that carry measurements rather than results.
class PlainCsv {
public:
    PlainCsv(const fs::path& path, const std::vector<std::string>& columns) : out_(path, std::ios::binary) {
        for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
        out_ << '\n';
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

std::vector<std::string> indexed(const std::string& prefix, Index d) {
    std::vector<std::string> out;
    for (Index i = 0; i < d; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

json to_json(const Vector<double>& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << '\n';
}

struct Context {
    RunConfig cfg;
    std::string hash;
    fs::path out;
    unsigned threads = 1;

    [[nodiscard]] json summary_base(const std::string& command) const {
        return json{{"command", command}, {"config_hash", hash}, {"seed", cfg.seed}, {"config", cfg.document}};
    }
};

int cmd_grad(const Context& ctx) {
    const GradResult result = run_grad(ctx.cfg, ctx.threads);
    CsvWriter csv(ctx.out / "grad.csv", ctx.hash,
                  {"method", "budget", "hyperparameter", "mean_error", "ci95_half_width", "median_relative_error",
                   "repeats"});
    for (const GradCell& c : result.cells) {
        csv.row() << c.method << c.budget << c.hyper << c.mean_error << c.ci_half_width << c.median_relative_error
                  << c.repeats;
    }
    json summary = ctx.summary_base("grad");
    summary["center"] = to_json(result.center);
    write_json(ctx.out / "summary.json", summary);
    return exit_ok;
}

int cmd_optimize(const Context& ctx) {
    const OptimizeResult result = run_optimize(ctx.cfg, ctx.threads);
    const Index d = ctx.cfg.param_dim();
    {
        const OptTrace& trace = result.runs.front().trace;
        CsvWriter csv(ctx.out / "trace.csv", ctx.hash, concat(concat({"t"}, indexed("theta_", d)), indexed("grad_", d)));
        PlainCsv timing(ctx.out / "trace_timing.csv", {"t", "wall_ms"});
        for (Index t = 0; t < trace.completed(); ++t) {
            csv.row() << t << trace.iterates.row(t) << trace.gradients.row(t);
            timing.row({std::to_string(t), format_number(trace.wall_ms[static_cast<std::size_t>(t)])});
        }
    }
    {
        CsvWriter csv(ctx.out / "runs.csv", ctx.hash,
                      concat({"run", "tuned_first", "tuned_second", "diverged", "error"}, indexed("theta_bar_", d)));
        for (std::size_t r = 0; r < result.runs.size(); ++r) {
            const RunOutcome& run = result.runs[r];
            const double nan = std::numeric_limits<double>::quiet_NaN();
            csv.row() << static_cast<Index>(r) << (run.tuned ? run.tuned->first : nan)
                      << (run.tuned ? run.tuned->second : nan) << run.trace.diverged << run.error
                      << run.trace.averaged;
        }
    }
    json summary = ctx.summary_base("optimize");
    const OptTrace& first = result.runs.front().trace;
    summary["theta_bar"] = to_json(first.averaged);
    summary["final_iterate"] = to_json(first.iterates.bottomRows(1).transpose());
    summary["iterations"] = first.completed();
    summary["runs"] = result.runs.size();
    summary["median_error"] = result.median_error;
    summary["diverged_runs"] = result.diverged;
    summary["diverged"] = result.diverged > 0;
    write_json(ctx.out / "summary.json", summary);
    return result.diverged > 0 ? exit_divergence : exit_ok;
}

int cmd_tune(const Context& ctx) {
    const TuneResult result = run_tune(ctx.cfg);
    const Index d = ctx.cfg.param_dim();
    CsvWriter csv(ctx.out / "tune.csv", ctx.hash,
                  concat({"cell", "first", "second", "score", "diverged"}, indexed("estimate_", d)));
    for (std::size_t i = 0; i < result.table.size(); ++i) {
        const TuneRow& row = result.table[i];
        csv.row() << static_cast<Index>(i) << row.tuple.first << row.tuple.second << row.score << row.diverged
                  << row.estimate;
    }
    json summary = ctx.summary_base("tune");
    summary["best_cell"] = result.best;
    summary["best"] = {result.best_tuple().first, result.best_tuple().second};
    write_json(ctx.out / "summary.json", summary);
    return exit_ok;
}

int cmd_coverage(const Context& ctx) {
    const CoverageResult result = run_coverage(ctx.cfg, ctx.threads);
    const Index d = ctx.cfg.param_dim();
    CsvWriter csv(ctx.out / "coverage.csv", ctx.hash,
                  concat(concat({"run", "diverged"}, indexed("theta_bar_", d)), indexed("contained_", d)));
    for (std::size_t r = 0; r < result.runs.size(); ++r) {
        const CoverageRun& run = result.runs[r];
        csv.row() << static_cast<Index>(r) << run.diverged << run.estimate;
        for (Index i = 0; i < run.contained.size(); ++i) csv << static_cast<bool>(run.contained[i]);
    }
    json summary = ctx.summary_base("coverage");
    summary["coverage_per_coordinate"] = to_json(result.per_coordinate);
    summary["coverage"] = result.averaged;
    summary["level"] = ctx.cfg.coverage.level;
    summary["diverged_runs"] = result.diverged;
    write_json(ctx.out / "summary.json", summary);
    return exit_ok;
}

int cmd_bias(const Context& ctx) {
    const auto rows = run_bias_probe(ctx.cfg);
    CsvWriter csv(ctx.out / "bias.csv", ctx.hash, {"sigma", "bias", "bound", "lipschitz", "mean_ratio"});
    for (const BiasRow& r : rows) {
        csv.row() << r.sigma << r.bias << r.bound << r.lipschitz << r.mean_ratio;
    }
    return exit_ok;
}

int cmd_bench(const Context& ctx) {
    const auto rows = run_bench(ctx.cfg);
    CsvWriter csv(ctx.out / "bench.csv", ctx.hash, {"method", "axis", "value", "repetitions", "mean_grad_norm"});
    PlainCsv timing(ctx.out / "bench_timing.csv",
                    {"method", "axis", "value", "median_ms", "iqr_ms", "note"});
    for (const BenchRow& r : rows) {
        csv.row() << r.method << r.axis << r.value << r.repetitions << r.mean_grad_norm;
        timing.row({r.method, r.axis, std::to_string(r.value), format_number(r.median_ms), format_number(r.iqr_ms),
                    "machine-dependent"});
    }
    return exit_ok;
}

int cmd_verify(const Context& ctx) {
    const VerifyReport report = run_verification(ctx.cfg.verify.trials, ctx.cfg.seed);
    CsvWriter csv(ctx.out / "verify.csv", ctx.hash, {"check", "residual", "tolerance", "passed"});
    for (const CheckResult& c : report.checks) {
        csv.row() << c.name << c.residual << c.tolerance << c.passed;
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " residual=" << format_number(c.residual)
                  << " tolerance=" << format_number(c.tolerance) << '\n';
    }
    return report.passed() ? exit_ok : exit_verification;
}

unsigned resolve_threads(int flag) {
    if (flag > 0) {
        return static_cast<unsigned>(flag);
    }
    if (const char* env = std::getenv("FSM_MLE_THREADS")) {
        try {
            const int v = std::stoi(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (const std::exception&) {
        }
    }
    return 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Likelihood-free maximum likelihood by local Fisher score matching"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    int threads = 0;
    app.add_option("--config", config_path, "Run configuration (JSON)");
    app.add_option("--seed", seed, "Master seed, overrides the config");
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--threads", threads, "Worker threads (fallback: FSM_MLE_THREADS)");

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const Context&);
    };
    const Command commands[] = {
        {"grad", "Gradient accuracy against the analytic reference", cmd_grad},
        {"optimize", "Run FSM-MLE or KDE-SP optimization", cmd_optimize},
        {"tune", "Grid search of hyperparameters by prediction error", cmd_tune},
        {"coverage", "Confidence-interval coverage experiment", cmd_coverage},
        {"bias-probe", "Smoothing bias against its bound", cmd_bias},
        {"bench", "Wall-clock time per gradient estimate", cmd_bench},
        {"verify", "Oracle identities and estimator invariants", cmd_verify},
    };
    for (const Command& c : commands) {
        app.add_subcommand(c.name, c.help)->fallthrough();
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_config;
    }

    try {
        Context ctx;
        nlohmann::json doc = nlohmann::json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw ConfigError(config_path, "cannot open config file");
            try {
                doc = nlohmann::json::parse(in);
            } catch (const nlohmann::json::parse_error& e) {
                throw ConfigError(config_path, std::string("invalid JSON: ") + e.what());
            }
        }
        if (seed) {
            doc["seed"] = *seed;
        }
        ctx.cfg = parse_config(doc);
        ctx.hash = config_hash(ctx.cfg.document);
        ctx.out = out_dir.empty() ? fs::path(ctx.cfg.output) : fs::path(out_dir);
        fs::create_directories(ctx.out);
        ctx.threads = resolve_threads(threads);

        for (const Command& c : commands) {
            if (app.got_subcommand(c.name)) {
                if (!ctx.cfg.experiment.empty() && ctx.cfg.experiment != c.name) {
                    throw ConfigError("/experiment", "config is for '" + ctx.cfg.experiment + "', not '" + c.name + "'");
                }
                return c.run(ctx);
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_failure;
    }
    return exit_failure;
}

}  // namespace fsmle
