#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "evofsm/harness.hpp"
#include "evofsm/memory.hpp"
#include "evofsm/scenarios.hpp"
#include "evofsm/text.hpp"

namespace fs = std::filesystem;
using namespace evofsm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalidConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitNoAnswer = 4;

/// Flags shared by run, bench and sweep.
struct CommonFlags {
    std::string config;
    std::string mode = "evofsm";
    int max_iterations = kDefaultMaxIterations;
    std::size_t max_states = kDefaultMaxStates;
    std::size_t max_steps = 20;
    std::size_t max_tool_calls = 3;
    std::string pool;
    std::size_t top_k = 3;
    double sim_threshold = 0.55;
    std::string backend = "scripted";
    std::string cassette;
    std::string fixtures;
    std::size_t workers = 1;
    std::optional<std::int64_t> seed;
    std::size_t embedding_dim = kDefaultEmbeddingDim;
    bool judge = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "FSM config JSON (default: <fixtures>/config.json or the built-in machine)");
    cmd->add_option("--mode", f.mode, "evofsm | static | rewrite | react")
        ->check(CLI::IsMember({"evofsm", "static", "rewrite", "react"}));
    cmd->add_option("--max-iterations", f.max_iterations, "Evolution iteration cap");
    cmd->add_option("--max-states", f.max_states, "State cap for evolved machines");
    cmd->add_option("--max-steps", f.max_steps, "Step budget per run");
    cmd->add_option("--max-tool-calls", f.max_tool_calls, "Tool calls per step");
    cmd->add_option("--pool", f.pool, "Experience pool JSONL file (evofsm mode); defaults to $EVOFSM_POOL");
    cmd->add_option("--top-k", f.top_k, "Records retrieved for warm start");
    cmd->add_option("--sim-threshold", f.sim_threshold, "Similarity needed to adopt a prior config");
    cmd->add_option("--backend", f.backend, "live | scripted | replay | record")
        ->check(CLI::IsMember({"live", "scripted", "replay", "record"}));
    cmd->add_option("--cassette", f.cassette, "Cassette file for replay/record");
    cmd->add_option("--fixtures", f.fixtures, "Fixture directory (script.json, corpus/)");
    cmd->add_option("--workers", f.workers, "Parallel workers")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", f.seed, "Seed forwarded to live backends and run ids");
    cmd->add_option("--embedding-dim", f.embedding_dim, "Dimension of the hashing embedder");
    cmd->add_flag("--judge", f.judge, "Score with the judge role instead of exact match");
}

FsmConfig resolve_config(const CommonFlags& f) {
    if (!f.config.empty()) return load_config_file(f.config);
    if (!f.fixtures.empty() && fs::exists(fs::path(f.fixtures) / "config.json"))
        return load_config_file((fs::path(f.fixtures) / "config.json").string());
    return scenarios::default_research_config();
}

BackendOptions backend_options(const CommonFlags& f) {
    BackendOptions o;
    o.mode = backend_mode_from_string(f.backend);
    o.fixtures_dir = f.fixtures;
    o.cassette_path = f.cassette;
    o.embedding_dim = f.embedding_dim;
    o.seed = f.seed;
    if (o.mode == BackendMode::Live || (o.mode == BackendMode::Record && f.fixtures.empty()))
        o.live = LiveSettings::from_env();
    if (o.mode == BackendMode::Record || o.mode == BackendMode::Replay) {
        if (f.cassette.empty()) throw Error("--cassette is required for " + f.backend);
        // One cassette per process; workers share it.
        o.shared_cassette = std::make_shared<Cassette>(
            f.cassette, o.mode == BackendMode::Record ? Cassette::Mode::Record : Cassette::Mode::Replay);
    }
    return o;
}

HarnessOptions harness_options(const CommonFlags& f) {
    HarnessOptions h;
    h.mode = mode_from_string(f.mode);
    h.limits.max_iterations = f.max_iterations;
    h.limits.max_states = f.max_states;
    h.limits.run.max_steps = f.max_steps;
    h.limits.run.max_tool_calls = f.max_tool_calls;
    h.warm.k = f.top_k;
    h.warm.sim_threshold = f.sim_threshold;
    h.warm.max_states = f.max_states;
    h.judge = f.judge;
    h.workers = f.workers;
    return h;
}

std::string pool_path(const CommonFlags& f) {
    if (!f.pool.empty()) return f.pool;
    if (const char* env = std::getenv("EVOFSM_POOL")) return env;
    return {};
}

std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const std::string& path, const std::string& content) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageFailure("cannot write " + path);
    out << content;
}

/// Shared validation gate: prints the report and returns false when invalid.
bool check_config(const FsmConfig& config, std::size_t max_states) {
    const auto report = validate_config(config, max_states);
    if (report.ok()) return true;
    std::cerr << "invalid config:\n" << report.to_text() << "\n";
    return false;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_run(const CommonFlags& f, const std::string& query, const std::string& out_dir) {
    FsmConfig config;
    try {
        config = resolve_config(f);
    } catch (const Error& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return kExitInvalidConfig;
    }
    if (!check_config(config, f.max_states)) return kExitInvalidConfig;

    const auto options_backend = backend_options(f);
    auto options = harness_options(f);
    std::unique_ptr<ExperiencePool> pool;
    const auto pool_file = pool_path(f);
    if (options.mode == Mode::EvoFsm && !pool_file.empty()) {
        pool = std::make_unique<ExperiencePool>(pool_file, f.embedding_dim);
        options.pool = pool.get();
    }

    Episode ep;
    try {
        const auto backends = make_backends(options_backend);
        ep = run_episode(config, query, backends, options);
    } catch (const BackendFailure& e) {
        std::cerr << "backend failure: " << e.what() << "\n";
        return kExitBackend;
    }

    const auto id = run_id(config, query, options.mode, f.seed);
    const auto dir = (fs::path(out_dir) / id).string();
    write_run_directory(ep, dir);

    const auto& t = ep.outcome.final_trajectory;
    std::cout << "mode: " << to_string(options.mode) << "\n";
    std::cout << "halted: " << to_string(t.halted_reason) << "\n";
    std::cout << "iterations: " << ep.outcome.iterations_used << "\n";
    for (const auto& e : ep.outcome.op_log) std::cout << "op: t" << e.iteration << " " << e.op.label() << "\n";
    if (ep.prior_id) std::cout << "warm start: " << *ep.prior_id << "\n";
    if (ep.record_id) std::cout << "pool record: " << *ep.record_id << "\n";
    std::cout << "run directory: " << dir << "\n";

    if (!ep.answer || text::trim(*ep.answer).empty()) {
        if (t.halted_reason == HaltReason::Error) {
            std::cerr << "no answer: " << t.error << "\n";
            return kExitBackend;
        }
        std::cerr << "no answer produced (halted " << to_string(t.halted_reason) << ")\n";
        return kExitNoAnswer;
    }
    std::cout << "answer: " << *ep.answer << "\n";
    return kExitOk;
}

BackendFactory make_factory(const CommonFlags& f) {
    const auto options = backend_options(f);
    return [options] { return make_backends(options); };
}

int cmd_bench(const CommonFlags& f, const std::string& dataset, const std::string& report_path, bool no_timestamp,
              bool json_stdout) {
    FsmConfig config;
    try {
        config = resolve_config(f);
    } catch (const Error& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return kExitInvalidConfig;
    }
    if (!check_config(config, f.max_states)) return kExitInvalidConfig;
    const auto items = load_dataset(dataset);
    auto options = harness_options(f);
    std::unique_ptr<ExperiencePool> pool;
    const auto pool_file = pool_path(f);
    if (options.mode == Mode::EvoFsm && !pool_file.empty()) {
        pool = std::make_unique<ExperiencePool>(pool_file, f.embedding_dim);
        options.pool = pool.get();
    }
    auto report = run_bench(items, config, make_factory(f), options);
    if (!no_timestamp) report.timestamp = now_iso8601();
    const auto json = to_json(report).dump(2) + "\n";
    if (!report_path.empty()) write_file(report_path, json);
    if (json_stdout) std::cout << json;
    std::cout << render_table(report);
    return kExitOk;
}

int cmd_sweep(const CommonFlags& f, const std::string& dataset, const std::vector<int>& caps,
              const std::string& csv_path) {
    FsmConfig config;
    try {
        config = resolve_config(f);
    } catch (const Error& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return kExitInvalidConfig;
    }
    if (!check_config(config, f.max_states)) return kExitInvalidConfig;
    const auto items = load_dataset(dataset);
    const auto rows = run_sweep(items, config, make_factory(f), caps, harness_options(f));
    const auto csv = sweep_csv(rows);
    if (!csv_path.empty()) write_file(csv_path, csv);
    std::cout << csv;
    return kExitOk;
}

int cmd_pool(const std::string& sub, const std::string& path, const std::string& id) {
    if (path.empty()) {
        std::cerr << "--pool is required\n";
        return kExitFailure;
    }
    const auto scan = scan_pool_file(path);
    if (!scan.corrupt.empty()) {
        for (const auto& c : scan.corrupt) std::cerr << path << ": line " << c.line << ": " << c.reason << "\n";
        return kExitInvalidConfig;
    }
    std::size_t success = 0, failure = 0;
    for (const auto& r : scan.records) (r.outcome == Outcome::Success ? success : failure) += 1;

    if (sub == "stats") {
        std::cout << success << " success / " << failure << " failure\n";
        if (!scan.records.empty()) std::cout << "dimension: " << scan.records.front().query_embedding.size() << "\n";
        return kExitOk;
    }
    if (sub == "show") {
        for (const auto& r : scan.records) {
            if (r.id != id) continue;
            std::cout << to_json(r).dump(2) << "\n";
            return kExitOk;
        }
        std::cerr << "no record '" << id << "'\n";
        return kExitFailure;
    }
    // verify
    const auto dim = scan.records.empty() ? 0 : scan.records.front().query_embedding.size();
    auto problems = check_pool_invariants(scan.records, dim);
    if (scan.partial_tail) problems.push_back("last line is missing its newline");
    for (const auto& p : problems) std::cerr << "violation: " << p << "\n";
    if (!problems.empty()) return kExitFailure;
    std::cout << "ok: " << scan.records.size() << " records\n";
    return kExitOk;
}

int cmd_scenario(const std::string& name, const std::string& out_dir) {
    const auto names = name == "all" ? scenarios::scenario_names() : std::vector<std::string>{name};
    for (const auto& n : names) {
        const auto s = scenarios::by_name(n);
        const auto dir = names.size() == 1 ? out_dir : (fs::path(out_dir) / n).string();
        scenarios::write_fixtures(s, dir);
        std::cout << "wrote " << n << " fixtures to " << dir << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evofsm: self-evolving finite-state research agents"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

    CommonFlags run_flags, bench_flags, sweep_flags;
    std::string query, out_dir = "out";
    auto* run = app.add_subcommand("run", "Answer one query and write a run directory");
    add_common(run, run_flags);
    run->add_option("query", query, "The question")->required();
    run->add_option("--out", out_dir, "Parent directory for run directories");

    std::string bench_dataset, bench_report;
    bool no_timestamp = false, json_stdout = false;
    auto* bench = app.add_subcommand("bench", "Run a JSONL dataset and report accuracy");
    add_common(bench, bench_flags);
    bench->add_option("dataset", bench_dataset, "JSONL dataset")->required()->check(CLI::ExistingFile);
    bench->add_option("--out", bench_report, "Write the JSON report to this file");
    bench->add_flag("--no-timestamp", no_timestamp, "Omit the timestamp for byte-comparable reports");
    bench->add_flag("--json", json_stdout, "Also print the JSON report to stdout");

    std::string sweep_dataset, sweep_out;
    std::vector<int> caps{0, 1, 2, 3};
    auto* sweep = app.add_subcommand("sweep", "Accuracy for several iteration caps (CSV)");
    add_common(sweep, sweep_flags);
    sweep->add_option("dataset", sweep_dataset, "JSONL dataset")->required()->check(CLI::ExistingFile);
    sweep->add_option("--caps", caps, "Iteration caps")->delimiter(',');
    sweep->add_option("--out", sweep_out, "Write the CSV to this file");

    std::string pool_sub, pool_file, record_id;
    auto* pool = app.add_subcommand("pool", "Inspect an experience pool");
    pool->add_option("action", pool_sub, "stats | show | verify")
        ->required()
        ->check(CLI::IsMember({"stats", "show", "verify"}));
    pool->add_option("id", record_id, "Record id for show");
    pool->add_option("--pool", pool_file, "Pool JSONL file")->envname("EVOFSM_POOL");

    std::string scenario_name, scenario_out = "fixtures";
    auto* scenario = app.add_subcommand("scenario", "Write a built-in offline fixture world");
    scenario->add_option("name", scenario_name, "case1 | case2 | case3 | suite | all")->required();
    scenario->add_option("--out", scenario_out, "Target directory");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_default_logger(spdlog::default_logger());
    spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

    try {
        if (*run) return cmd_run(run_flags, query, out_dir);
        if (*bench) return cmd_bench(bench_flags, bench_dataset, bench_report, no_timestamp, json_stdout);
        if (*sweep) return cmd_sweep(sweep_flags, sweep_dataset, caps, sweep_out);
        if (*pool) {
            if (pool_sub == "show" && record_id.empty()) {
                std::cerr << "pool show needs a record id\n";
                return kExitFailure;
            }
            return cmd_pool(pool_sub, pool_file, record_id);
        }
        if (*scenario) return cmd_scenario(scenario_name, scenario_out);
    } catch (const CorruptPool& e) {
        std::cerr << e.what() << "\n";
        return kExitInvalidConfig;
    } catch (const BackendFailure& e) {
        std::cerr << "backend failure: " << e.what() << "\n";
        return kExitBackend;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}
