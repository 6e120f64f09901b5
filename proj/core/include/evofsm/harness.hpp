#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evofsm/backends.hpp"
#include "evofsm/critic.hpp"
#include "evofsm/engine.hpp"
#include "evofsm/evolution.hpp"
#include "evofsm/fsm.hpp"
#include "evofsm/memory.hpp"

namespace evofsm {

/// Execution modes: the full system and the three ablation baselines.
enum class Mode {
    EvoFsm,   // warm start + structured evolution + memory write-back
    Static,   // the given FSM, no evolution, no memory
    Rewrite,  // free-form instruction rewriting, topology frozen, no memory
    React,    // single reason-act agent loop, no FSM, no memory
};

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view name);

struct BenchmarkItem {
    std::string id;
    std::string question;
    std::string answer;
    Json metadata = Json::object();
};

Json to_json(const BenchmarkItem& item);
/// Parses JSONL `{"id","question","answer"}` lines; ids must be unique. Blank lines are skipped.
std::vector<BenchmarkItem> parse_dataset(std::string_view jsonl);
std::vector<BenchmarkItem> load_dataset(const std::string& path);

struct HarnessOptions {
    Mode mode = Mode::EvoFsm;
    EvolutionLimits limits;
    WarmStartParams warm;
    ExperiencePool* pool = nullptr;  // EvoFsm only; null disables memory
    bool judge = false;              // score with the judge role instead of exact match
    std::size_t workers = 1;
};

/// Everything one query produced under one mode.
struct Episode {
    std::string query;
    FsmConfig initial_config;  // M_init (after warm start)
    EvolutionOutcome outcome;
    std::optional<std::string> answer;
    std::optional<std::string> prior_id;   // warm-start source record
    std::optional<std::string> record_id;  // record written to the pool
};

/// Single reason-act loop used by Mode::React. Steps carry state id "ReAct".
Trajectory run_react(std::string_view query, const Backends& backends, const RunLimits& limits,
                     ToolLog* log = nullptr);

/// Runs one query under `options.mode`. Backend faults inside runs are
/// recorded on the trajectory; faults outside them propagate.
Episode run_episode(const FsmConfig& default_config, std::string_view query, const Backends& backends,
                    const HarnessOptions& options);

bool exact_match(std::string_view answer, std::string_view gold);

/// Asks the judge role whether `answer` matches `gold`; replies starting with CORRECT count.
bool judge_match(std::string_view question, std::string_view answer, std::string_view gold, ChatBackend& judge);

struct ItemReport {
    std::string id;
    std::string question;
    std::string gold;
    std::optional<std::string> answer;
    bool correct = false;
    std::vector<bool> verdicts;  // passed flag per iteration
    int iterations_used = 0;
    std::map<std::string, int> op_counts;  // by op kind
    std::string halted_reason;
    std::size_t steps = 0;
    std::optional<std::string> prior_id;
    std::string error;
};

struct RunReport {
    std::string mode;
    std::size_t workers = 1;
    std::vector<ItemReport> items;
    std::size_t total = 0;
    std::size_t correct = 0;
    std::optional<double> accuracy;  // undefined for an empty dataset
    double mean_iterations = 0.0;
    double mean_steps = 0.0;
    double mean_ops = 0.0;
    std::optional<std::string> timestamp;
};

Json to_json(const ItemReport& r);
Json to_json(const RunReport& r);
/// Aligned text table: one row per item plus an aggregate line.
std::string render_table(const RunReport& r);
std::string format_accuracy(const std::optional<double>& accuracy);

/// Creates the backends for one worker.
using BackendFactory = std::function<Backends()>;

/// Runs every item; per-item failures are recorded and never abort the batch.
RunReport run_bench(const std::vector<BenchmarkItem>& items, const FsmConfig& default_config,
                    const BackendFactory& factory, const HarnessOptions& options);

struct SweepRow {
    int cap = 0;
    std::optional<double> accuracy;
    double mean_ops = 0.0;
};

/// One EvoFsm bench per iteration cap.
std::vector<SweepRow> run_sweep(const std::vector<BenchmarkItem>& items, const FsmConfig& default_config,
                                const BackendFactory& factory, const std::vector<int>& caps,
                                HarnessOptions options);

/// CSV with header `cap,accuracy,mean_ops`.
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Content address of a run: hash of config, input, mode and seed.
std::string run_id(const FsmConfig& config, std::string_view input, Mode mode, std::optional<std::int64_t> seed);

/// Writes trajectory.json, verdicts.json, oplog.jsonl, final_config.json,
/// initial_config.json, tool_log.jsonl and summary.json into `dir`.
void write_run_directory(const Episode& episode, const std::string& dir);

}  // namespace evofsm
