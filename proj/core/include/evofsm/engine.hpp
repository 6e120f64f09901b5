#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "evofsm/backends.hpp"
#include "evofsm/fsm.hpp"

namespace evofsm {

enum class HaltReason { Terminal, StepCap, LoopDetected, Error };

std::string_view to_string(HaltReason reason);
HaltReason halt_reason_from_string(std::string_view name);

/// One tool invocation as kept in the trajectory. Full payloads live in the ToolLog.
struct ToolCallRecord {
    std::string tool;
    std::string input;
    std::string output_hash;     // FNV-1a of the full output
    std::string output_preview;  // first 200 bytes
    bool refused = false;
    bool failed = false;
    std::string note;

    bool is_evidence() const { return !refused && !failed && !output_preview.empty(); }

    friend bool operator==(const ToolCallRecord&, const ToolCallRecord&) = default;
};

struct StepRecord {
    std::size_t index = 0;
    std::string state_id;
    std::string agent_output;
    std::vector<ToolCallRecord> tool_calls;
    std::optional<std::string> chosen_transition;

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

/// The materialized runtime context of one run.
struct Trajectory {
    std::string query;
    std::vector<StepRecord> steps;
    std::map<std::string, int> visit_counts;
    std::optional<std::string> final_answer;
    HaltReason halted_reason = HaltReason::Error;
    std::string error;  // fault description when halted_reason = ERROR

    std::vector<std::string> state_sequence() const;

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

Json to_json(const Trajectory& t);
Trajectory trajectory_from_json(const Json& j, const std::string& path = "$");

/// Full tool payload kept beside the trajectory.
struct ToolPayload {
    std::size_t step = 0;
    std::size_t call = 0;
    std::string tool;
    std::string input;
    std::string output;
};

struct ToolLog {
    std::vector<ToolPayload> entries;
};

Json to_json(const ToolPayload& p);

struct RunLimits {
    std::size_t max_steps = 20;
    int loop_threshold = 3;
    std::size_t max_tool_calls = 3;
    std::size_t context_steps = 6;
    std::size_t tool_output_chars = kDefaultToolOutputLimit;
};

inline constexpr std::size_t kPreviewChars = 200;

struct RouteDecision {
    std::string transition_id;
    std::string to_state;
};

/**
 * @brief Picks the next state.
 *
 * Transitions are tried in (priority, id) order. ALWAYS fires; PREDICATE is
 * evaluated against the trajectory; the ROUTER_JUDGED transitions are settled
 * together by a single router call at the position of the first of them. A
 * router reply of NONE means no judged condition holds. Edges matching a
 * TRANSITION_EDGE ForbiddenPattern are skipped.
 *
 * Throws NoTransitionFired when nothing fires, RouterParseError when the
 * router reply names no candidate and there is no ALWAYS fallback.
 */
RouteDecision route_decision(const FsmConfig& config, std::string_view current,
                             const Trajectory& trajectory, ChatBackend& router,
                             const RunLimits& limits = {}, const ToolLog* log = nullptr);

std::string route(const FsmConfig& config, std::string_view current, const Trajectory& trajectory,
                  ChatBackend& router);

/// Evaluates a built-in predicate for a transition leaving `current`.
bool evaluate_predicate(const ConditionSpec& condition, std::string_view current,
                        const Trajectory& trajectory);

/**
 * @brief Runs one state: prompt, agent call, permitted tool calls, and a
 * follow-up agent call carrying the tool results when any tool ran.
 *
 * The step is appended to `trajectory` (visit count included) and returned.
 * Tool requests outside `allowed_tools` or blocked by a TOOL_IN_STATE pattern
 * are recorded as refusals. Agent backend failures propagate.
 */
StepRecord execute_state(const FsmConfig& config, std::string_view state_id, Trajectory& trajectory,
                         ChatBackend& agent, const ToolRegistry& tools, ToolLog& log,
                         const RunLimits& limits = {});

/// Executes the machine from its initial state until a halt condition.
Trajectory run(const FsmConfig& config, std::string_view query, const Backends& backends,
               const RunLimits& limits = {}, ToolLog* log = nullptr);

/// Prompt text summarizing the last `limits.context_steps` steps.
std::string render_context(const Trajectory& trajectory, const ToolLog& log, const RunLimits& limits);

/// Compact digest for critics and proposers: state sequence and tool summaries.
std::string evidence_digest(const Trajectory& trajectory, std::size_t max_steps = 20);

}  // namespace evofsm
