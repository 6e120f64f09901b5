#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "evofsm/backends.hpp"
#include "evofsm/engine.hpp"

namespace evofsm {

enum class FailureCode {
    QuantEvidenceMissing,
    LogicalInconsistency,
    Hallucination,
    IncompleteReasoning,
    Loop,
    SourceQuality,
};

std::string_view to_string(FailureCode code);
/// Maps unknown names to IncompleteReasoning and returns false.
bool failure_code_from_string(std::string_view name, FailureCode& out);

struct FailureTag {
    FailureCode code = FailureCode::IncompleteReasoning;
    std::string detail;

    friend bool operator==(const FailureTag&, const FailureTag&) = default;
};

enum class MechanicalFlag { LoopDetected, StepCap, EmptyAnswer };

std::string_view to_string(MechanicalFlag flag);

struct Verdict {
    bool passed = false;
    std::vector<FailureTag> failure_modes;
    std::string rationale;
    std::set<MechanicalFlag> mechanical_flags;

    bool has(FailureCode code) const;

    friend bool operator==(const Verdict&, const Verdict&) = default;
};

Json to_json(const Verdict& v);
Verdict verdict_from_json(const Json& j, const std::string& path = "$");

/**
 * @brief Critic C: judges a finished trajectory against the query.
 *
 * Mechanical checks run first. A loop, a step-cap halt, or a missing answer
 * fails the verdict without consulting the backend. Otherwise one critic call
 * sees the query, the final answer and an evidence digest (never a gold
 * answer). Replies that cannot be parsed fail safe to INCOMPLETE_REASONING.
 *
 * Accepted replies: a JSON object `{"passed", "failure_modes": [{"code","detail"}], "rationale"}`
 * (optionally fenced), or a line protocol whose first line is `PASS` or `FAIL`
 * followed by `- CODE: detail` lines.
 */
Verdict critique(std::string_view query, const Trajectory& trajectory, ChatBackend& critic);

/// Parses a critic reply; throws Error when neither format matches.
Verdict parse_critic_reply(std::string_view reply);

}  // namespace evofsm
