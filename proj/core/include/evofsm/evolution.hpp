#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "evofsm/backends.hpp"
#include "evofsm/critic.hpp"
#include "evofsm/engine.hpp"
#include "evofsm/experience.hpp"
#include "evofsm/fsm.hpp"
#include "evofsm/ops.hpp"

namespace evofsm {

inline constexpr int kDefaultMaxIterations = 3;
inline constexpr std::size_t kMaxOpsPerProposal = 3;

enum class EvolutionMode {
    Structured,  // atomic ops proposed by the proposer role
    Rewrite,     // free-form instruction rewriting, topology frozen (ablation only)
};

struct EvolutionLimits {
    /// Run+critique rounds. 0 still executes one run but allows no evolution.
    int max_iterations = kDefaultMaxIterations;
    std::size_t max_states = kDefaultMaxStates;
    RunLimits run;
    /// Re-prompt once with the rejection reasons when no proposed op applies.
    bool retry_on_rejection = true;
};

struct IterationRecord {
    int iteration = 0;
    FsmConfig config;
    Trajectory trajectory;
    ToolLog tool_log;
    Verdict verdict;
    std::vector<std::string> rejections;
};

struct EvolutionOutcome {
    FsmConfig final_config;
    Trajectory final_trajectory;
    ToolLog final_tool_log;
    std::vector<Verdict> verdicts;
    std::vector<OpLogEntry> op_log;
    int iterations_used = 0;
    bool succeeded = false;
    std::vector<IterationRecord> iterations;
    std::string stop_reason;
};

/// Human-readable machine rendering used in proposer prompts.
std::string render_config_compact(const FsmConfig& config);

/**
 * Parses a proposer reply: the first ```json fenced block must hold an array
 * of op objects. Invalid entries are dropped (reason appended to `warnings`);
 * at most kMaxOpsPerProposal ops are kept. A REVISE_INSTRUCTION entry may use
 * `"append"` instead of `"instruction"`; it is resolved against `config`.
 * Throws NoValidProposal when nothing survives.
 */
std::vector<AtomicOp> parse_proposal(std::string_view reply, const FsmConfig& config,
                                     std::vector<std::string>* warnings = nullptr);

/// Asks the proposer for 1..3 atomic ops repairing the failures in `verdict`.
std::vector<AtomicOp> propose_ops(const Verdict& verdict, const FsmConfig& config, const Trajectory& trajectory,
                                  const std::vector<ExperienceRecord>& retrieved, ChatBackend& proposer,
                                  std::string_view feedback = {});

/// Ablation baseline: replaces every instruction in one backend call, topology untouched.
FsmConfig apply_freeform_rewrite(const FsmConfig& config, const Verdict& verdict, ChatBackend& rewriter);

/**
 * @brief The critic-triggered evolution loop.
 *
 * Each iteration runs the machine and critiques the result. A failed verdict
 * (before the last iteration) asks for ops, which are applied in order;
 * rejected ops are skipped. The returned final config is that of the first
 * passing iteration, else of the last one.
 */
EvolutionOutcome evolve(const FsmConfig& initial_config, std::string_view query, const Backends& backends,
                        const EvolutionLimits& limits = {}, const std::vector<ExperienceRecord>& retrieved = {},
                        EvolutionMode mode = EvolutionMode::Structured);

}  // namespace evofsm
