#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace evofsm {

using Json = nlohmann::json;

inline constexpr std::size_t kDefaultMaxStates = 10;

enum class ConditionKind { Always, Predicate, RouterJudged };

/**
 * @brief Guard attached to a transition.
 *
 * PREDICATE conditions are evaluated mechanically against the trajectory;
 * ROUTER_JUDGED conditions are resolved by one router-backend call.
 */
struct ConditionSpec {
    ConditionKind kind = ConditionKind::Always;
    std::string predicate;          // PREDICATE only
    Json args = Json::array();      // PREDICATE only
    std::string guidance;           // ROUTER_JUDGED only
    Json extra = Json::object();    // unknown fields, preserved on write

    static ConditionSpec always() { return {}; }
    static ConditionSpec when(std::string predicate, Json args);
    static ConditionSpec judged(std::string guidance);

    friend bool operator==(const ConditionSpec&, const ConditionSpec&) = default;
};

struct StateDef {
    std::string id;
    std::string name;
    std::string instruction;
    std::vector<std::string> allowed_tools;
    bool is_terminal = false;
    Json extra = Json::object();

    bool allows(std::string_view tool) const;

    friend bool operator==(const StateDef&, const StateDef&) = default;
};

struct TransitionRule {
    std::string id;
    std::string from_state;
    std::string to_state;
    ConditionSpec condition;
    int priority = 0;  // lower fires first
    Json extra = Json::object();

    friend bool operator==(const TransitionRule&, const TransitionRule&) = default;
};

enum class PatternKind { TransitionEdge, ToolInState };

/**
 * @brief A learned "do not do this" rule carried by a config.
 *
 * For TRANSITION_EDGE, `first`/`second` are the from/to state ids. For
 * TOOL_IN_STATE they are the state id and tool name. Ids need not exist in
 * the config the pattern is attached to.
 */
struct ForbiddenPattern {
    PatternKind kind = PatternKind::TransitionEdge;
    std::string first;
    std::string second;
    std::string rationale;

    bool same_target(const ForbiddenPattern& other) const {
        return kind == other.kind && first == other.first && second == other.second;
    }

    friend bool operator==(const ForbiddenPattern&, const ForbiddenPattern&) = default;
};

/// The machine that evolves: states (with their instructions) and transitions.
struct FsmConfig {
    std::vector<StateDef> states;
    std::vector<TransitionRule> transitions;
    std::string initial_state;
    std::int64_t version = 1;
    std::vector<ForbiddenPattern> negative_constraints;
    Json extra = Json::object();

    const StateDef* find_state(std::string_view id) const;
    StateDef* find_state(std::string_view id);
    const TransitionRule* find_transition(std::string_view id) const;
    TransitionRule* find_transition(std::string_view id);

    /// Outgoing transitions of `state_id` in firing order: (priority, id).
    std::vector<const TransitionRule*> outgoing(std::string_view state_id) const;

    bool forbids_edge(std::string_view from, std::string_view to) const;
    bool forbids_tool(std::string_view state_id, std::string_view tool) const;

    friend bool operator==(const FsmConfig&, const FsmConfig&) = default;
};

/// Equality ignoring `version` and the order of states/transitions/constraints.
bool structurally_equal(const FsmConfig& a, const FsmConfig& b);

/// Canonical topology projection: sorted state ids plus sorted transitions, instructions excluded.
std::string topology_projection(const FsmConfig& config);

/// Short stable content hash of a config (version excluded).
std::string config_hash(const FsmConfig& config);

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

enum class ViolationCode {
    DupStateId,
    DanglingTransition,
    NoInitial,
    UnreachableState,
    NontermDeadEnd,
    StateCapExceeded,
    DupPriority,
    UnknownPredicate,
    NoTerminalReachable,
    EmptyId,
    DupTransitionId,
};

std::string_view to_string(ViolationCode code);

struct Violation {
    ViolationCode code;
    std::string detail;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool ok() const { return violations.empty(); }
    bool has(ViolationCode code) const;
    std::string to_text() const;
};

ValidationReport validate_config(const FsmConfig& config,
                                 std::size_t max_states = kDefaultMaxStates);

/// Names of the mechanical predicates known to the engine.
const std::vector<std::string>& builtin_predicates();

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

std::string_view to_string(ConditionKind kind);
std::string_view to_string(PatternKind kind);

Json to_json(const ConditionSpec& cond);
Json to_json(const StateDef& state);
Json to_json(const TransitionRule& rule);
Json to_json(const ForbiddenPattern& pattern);
Json to_json(const FsmConfig& config);

// `path` is the JSON-path of `j` used in SchemaError messages.
ConditionSpec condition_from_json(const Json& j, const std::string& path = "$");
StateDef state_from_json(const Json& j, const std::string& path = "$");
TransitionRule transition_from_json(const Json& j, const std::string& path = "$");
ForbiddenPattern pattern_from_json(const Json& j, const std::string& path = "$");
FsmConfig config_from_json(const Json& j, const std::string& path = "$");

/// Pretty-printed UTF-8 JSON with sorted keys.
std::string serialize_config(const FsmConfig& config);
FsmConfig deserialize_config(std::string_view text);

FsmConfig load_config_file(const std::string& path);
void save_config_file(const FsmConfig& config, const std::string& path);

}  // namespace evofsm
