#include "evofsm/fsm.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "evofsm/errors.hpp"
#include "evofsm/text.hpp"
#include "json_util.hpp"

namespace evofsm {

using namespace detail;

ConditionSpec ConditionSpec::when(std::string predicate, Json args) {
    ConditionSpec c;
    c.kind = ConditionKind::Predicate;
    c.predicate = std::move(predicate);
    c.args = std::move(args);
    return c;
}

ConditionSpec ConditionSpec::judged(std::string guidance) {
    ConditionSpec c;
    c.kind = ConditionKind::RouterJudged;
    c.guidance = std::move(guidance);
    return c;
}

bool StateDef::allows(std::string_view tool) const {
    return std::find(allowed_tools.begin(), allowed_tools.end(), tool) != allowed_tools.end();
}

const StateDef* FsmConfig::find_state(std::string_view id) const {
    for (const auto& s : states)
        if (s.id == id) return &s;
    return nullptr;
}

StateDef* FsmConfig::find_state(std::string_view id) {
    for (auto& s : states)
        if (s.id == id) return &s;
    return nullptr;
}

const TransitionRule* FsmConfig::find_transition(std::string_view id) const {
    for (const auto& t : transitions)
        if (t.id == id) return &t;
    return nullptr;
}

TransitionRule* FsmConfig::find_transition(std::string_view id) {
    for (auto& t : transitions)
        if (t.id == id) return &t;
    return nullptr;
}

std::vector<const TransitionRule*> FsmConfig::outgoing(std::string_view state_id) const {
    std::vector<const TransitionRule*> out;
    for (const auto& t : transitions)
        if (t.from_state == state_id) out.push_back(&t);
    std::sort(out.begin(), out.end(), [](const TransitionRule* a, const TransitionRule* b) {
        if (a->priority != b->priority) return a->priority < b->priority;
        return a->id < b->id;
    });
    return out;
}

bool FsmConfig::forbids_edge(std::string_view from, std::string_view to) const {
    return std::any_of(negative_constraints.begin(), negative_constraints.end(), [&](const auto& p) {
        return p.kind == PatternKind::TransitionEdge && p.first == from && p.second == to;
    });
}

bool FsmConfig::forbids_tool(std::string_view state_id, std::string_view tool) const {
    return std::any_of(negative_constraints.begin(), negative_constraints.end(), [&](const auto& p) {
        return p.kind == PatternKind::ToolInState && p.first == state_id && p.second == tool;
    });
}

namespace {

Json canonical_json(const FsmConfig& config, bool with_instructions) {
    Json j = to_json(config);
    j.erase("version");
    auto by_id = [](const Json& a, const Json& b) { return a.at("id") < b.at("id"); };
    auto& states = j["states"];
    std::sort(states.begin(), states.end(), by_id);
    if (!with_instructions) {
        for (auto& s : states) s.erase("instruction");
    }
    auto& transitions = j["transitions"];
    std::sort(transitions.begin(), transitions.end(), by_id);
    auto& constraints = j["negative_constraints"];
    std::sort(constraints.begin(), constraints.end());
    return j;
}

}  // namespace

bool structurally_equal(const FsmConfig& a, const FsmConfig& b) {
    return canonical_json(a, true) == canonical_json(b, true);
}

std::string topology_projection(const FsmConfig& config) {
    return canonical_json(config, false).dump();
}

std::string config_hash(const FsmConfig& config) {
    return text::hash_hex(canonical_json(config, true).dump());
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

std::string_view to_string(ViolationCode code) {
    switch (code) {
        case ViolationCode::DupStateId: return "DUP_STATE_ID";
        case ViolationCode::DanglingTransition: return "DANGLING_TRANSITION";
        case ViolationCode::NoInitial: return "NO_INITIAL";
        case ViolationCode::UnreachableState: return "UNREACHABLE_STATE";
        case ViolationCode::NontermDeadEnd: return "NONTERMINAL_DEAD_END";
        case ViolationCode::StateCapExceeded: return "STATE_CAP_EXCEEDED";
        case ViolationCode::DupPriority: return "DUP_PRIORITY";
        case ViolationCode::UnknownPredicate: return "UNKNOWN_PREDICATE";
        case ViolationCode::NoTerminalReachable: return "NO_TERMINAL_REACHABLE";
        case ViolationCode::EmptyId: return "EMPTY_ID";
        case ViolationCode::DupTransitionId: return "DUP_TRANSITION_ID";
    }
    return "UNKNOWN";
}

bool ValidationReport::has(ViolationCode code) const {
    return std::any_of(violations.begin(), violations.end(),
                       [code](const Violation& v) { return v.code == code; });
}

std::string ValidationReport::to_text() const {
    if (violations.empty()) return "valid\n";
    std::ostringstream out;
    for (const auto& v : violations) out << to_string(v.code) << ": " << v.detail << '\n';
    return out.str();
}

const std::vector<std::string>& builtin_predicates() {
    static const std::vector<std::string> names = {
        "evidence_count_at_least",
        "steps_exceeded",
        "last_output_contains",
        "visit_count_exceeded",
    };
    return names;
}

namespace {

bool predicate_args_ok(const ConditionSpec& c) {
    const auto& a = c.args;
    if (!a.is_array()) return false;
    if (c.predicate == "last_output_contains") return a.size() == 1 && a[0].is_string();
    if (c.predicate == "visit_count_exceeded") {
        if (a.size() == 1) return a[0].is_number_integer();
        return a.size() == 2 && a[0].is_string() && a[1].is_number_integer();
    }
    return a.size() == 1 && a[0].is_number_integer();
}

std::set<std::string> reachable_from(const FsmConfig& config, const std::string& start) {
    std::set<std::string> seen;
    if (!config.find_state(start)) return seen;
    std::queue<std::string> frontier;
    frontier.push(start);
    seen.insert(start);
    while (!frontier.empty()) {
        auto cur = frontier.front();
        frontier.pop();
        for (const auto& t : config.transitions) {
            if (t.from_state != cur || !config.find_state(t.to_state)) continue;
            if (seen.insert(t.to_state).second) frontier.push(t.to_state);
        }
    }
    return seen;
}

}  // namespace

ValidationReport validate_config(const FsmConfig& config, std::size_t max_states) {
    ValidationReport report;
    auto add = [&](ViolationCode code, std::string detail) {
        report.violations.push_back({code, std::move(detail)});
    };

    if (config.states.size() > max_states) {
        add(ViolationCode::StateCapExceeded, std::to_string(config.states.size()) +
                                                 " states exceed the cap of " +
                                                 std::to_string(max_states));
    }

    std::set<std::string> state_ids;
    for (const auto& s : config.states) {
        if (s.id.empty()) add(ViolationCode::EmptyId, "state with empty id");
        if (!state_ids.insert(s.id).second) add(ViolationCode::DupStateId, "state '" + s.id + "'");
    }

    const bool has_initial = config.find_state(config.initial_state) != nullptr;
    if (!has_initial) {
        add(ViolationCode::NoInitial, config.initial_state.empty()
                                          ? std::string("initial_state is empty")
                                          : "initial_state '" + config.initial_state +
                                                "' is not a state");
    }

    std::set<std::string> transition_ids;
    std::set<std::pair<std::string, int>> priorities;
    const auto& predicates = builtin_predicates();
    for (const auto& t : config.transitions) {
        if (t.id.empty()) add(ViolationCode::EmptyId, "transition with empty id");
        if (!transition_ids.insert(t.id).second)
            add(ViolationCode::DupTransitionId, "transition '" + t.id + "'");
        if (!state_ids.contains(t.from_state) || !state_ids.contains(t.to_state)) {
            add(ViolationCode::DanglingTransition,
                "transition '" + t.id + "' " + t.from_state + " -> " + t.to_state);
        }
        if (!priorities.insert({t.from_state, t.priority}).second) {
            add(ViolationCode::DupPriority, "priority " + std::to_string(t.priority) +
                                                " repeated on state '" + t.from_state + "'");
        }
        if (t.condition.kind == ConditionKind::Predicate) {
            const bool known = std::find(predicates.begin(), predicates.end(),
                                         t.condition.predicate) != predicates.end();
            if (!known) {
                add(ViolationCode::UnknownPredicate,
                    "'" + t.condition.predicate + "' on transition '" + t.id + "'");
            } else if (!predicate_args_ok(t.condition)) {
                add(ViolationCode::UnknownPredicate, "bad arguments for '" +
                                                         t.condition.predicate +
                                                         "' on transition '" + t.id + "'");
            }
        }
    }

    for (const auto& s : config.states) {
        if (s.is_terminal) continue;
        const bool has_out = std::any_of(
            config.transitions.begin(), config.transitions.end(), [&](const TransitionRule& t) {
                return t.from_state == s.id && state_ids.contains(t.to_state);
            });
        if (!has_out) add(ViolationCode::NontermDeadEnd, "state '" + s.id + "'");
    }

    if (has_initial) {
        const auto seen = reachable_from(config, config.initial_state);
        bool terminal_reached = false;
        for (const auto& s : config.states) {
            if (!seen.contains(s.id)) add(ViolationCode::UnreachableState, "state '" + s.id + "'");
            if (s.is_terminal && seen.contains(s.id)) terminal_reached = true;
        }
        if (!terminal_reached) {
            add(ViolationCode::NoTerminalReachable,
                "no terminal state reachable from '" + config.initial_state + "'");
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

std::string_view to_string(ConditionKind kind) {
    switch (kind) {
        case ConditionKind::Always: return "always";
        case ConditionKind::Predicate: return "predicate";
        case ConditionKind::RouterJudged: return "router";
    }
    return "always";
}

std::string_view to_string(PatternKind kind) {
    return kind == PatternKind::TransitionEdge ? "TRANSITION_EDGE" : "TOOL_IN_STATE";
}

Json to_json(const ConditionSpec& c) {
    Json j = with_extras(c.extra);
    j["kind"] = to_string(c.kind);
    if (c.kind == ConditionKind::Predicate || !c.predicate.empty()) j["predicate"] = c.predicate;
    if (c.kind == ConditionKind::Predicate || !c.args.empty()) j["args"] = c.args;
    if (c.kind == ConditionKind::RouterJudged || !c.guidance.empty()) j["guidance"] = c.guidance;
    return j;
}

Json to_json(const StateDef& s) {
    Json j = with_extras(s.extra);
    j["id"] = s.id;
    j["name"] = s.name;
    j["instruction"] = s.instruction;
    j["allowed_tools"] = s.allowed_tools;
    j["is_terminal"] = s.is_terminal;
    return j;
}

Json to_json(const TransitionRule& t) {
    Json j = with_extras(t.extra);
    j["id"] = t.id;
    j["from"] = t.from_state;
    j["to"] = t.to_state;
    j["priority"] = t.priority;
    j["condition"] = to_json(t.condition);
    return j;
}

Json to_json(const ForbiddenPattern& p) {
    Json j = Json::object();
    j["kind"] = to_string(p.kind);
    if (p.kind == PatternKind::TransitionEdge) {
        j["from"] = p.first;
        j["to"] = p.second;
    } else {
        j["state"] = p.first;
        j["tool"] = p.second;
    }
    j["rationale"] = p.rationale;
    return j;
}

Json to_json(const FsmConfig& c) {
    Json j = with_extras(c.extra);
    j["version"] = c.version;
    j["initial_state"] = c.initial_state;
    j["states"] = Json::array();
    for (const auto& s : c.states) j["states"].push_back(to_json(s));
    j["transitions"] = Json::array();
    for (const auto& t : c.transitions) j["transitions"].push_back(to_json(t));
    j["negative_constraints"] = Json::array();
    for (const auto& p : c.negative_constraints) j["negative_constraints"].push_back(to_json(p));
    return j;
}

ConditionSpec condition_from_json(const Json& j, const std::string& path) {
    require_object(j, path);
    ConditionSpec c;
    const auto kind = req_string(j, "kind", path);
    if (kind == "always") {
        c.kind = ConditionKind::Always;
    } else if (kind == "predicate") {
        c.kind = ConditionKind::Predicate;
    } else if (kind == "router") {
        c.kind = ConditionKind::RouterJudged;
    } else {
        throw SchemaError(child(path, "kind"), "unknown condition kind '" + kind + "'");
    }
    c.predicate = opt_string(j, "predicate", path);
    if (c.kind == ConditionKind::Predicate && c.predicate.empty())
        throw SchemaError(child(path, "predicate"), "missing required field");
    if (auto it = j.find("args"); it != j.end()) {
        require_array(*it, child(path, "args"));
        c.args = *it;
    }
    c.guidance = opt_string(j, "guidance", path);
    c.extra = extras(j, {"kind", "predicate", "args", "guidance"});
    return c;
}

StateDef state_from_json(const Json& j, const std::string& path) {
    require_object(j, path);
    StateDef s;
    s.id = req_string(j, "id", path);
    s.name = opt_string(j, "name", path);
    s.instruction = opt_string(j, "instruction", path);
    s.allowed_tools = opt_string_list(j, "allowed_tools", path);
    s.is_terminal = opt_bool(j, "is_terminal", path, false);
    s.extra = extras(j, {"id", "name", "instruction", "allowed_tools", "is_terminal"});
    return s;
}

TransitionRule transition_from_json(const Json& j, const std::string& path) {
    require_object(j, path);
    TransitionRule t;
    t.id = req_string(j, "id", path);
    t.from_state = req_string(j, "from", path);
    t.to_state = req_string(j, "to", path);
    t.priority = static_cast<int>(opt_int(j, "priority", path, 0));
    if (auto it = j.find("condition"); it != j.end())
        t.condition = condition_from_json(*it, child(path, "condition"));
    t.extra = extras(j, {"id", "from", "to", "priority", "condition"});
    return t;
}

ForbiddenPattern pattern_from_json(const Json& j, const std::string& path) {
    require_object(j, path);
    ForbiddenPattern p;
    const auto kind = req_string(j, "kind", path);
    if (kind == "TRANSITION_EDGE") {
        p.kind = PatternKind::TransitionEdge;
        p.first = req_string(j, "from", path);
        p.second = req_string(j, "to", path);
    } else if (kind == "TOOL_IN_STATE") {
        p.kind = PatternKind::ToolInState;
        p.first = req_string(j, "state", path);
        p.second = req_string(j, "tool", path);
    } else {
        throw SchemaError(child(path, "kind"), "unknown pattern kind '" + kind + "'");
    }
    p.rationale = opt_string(j, "rationale", path);
    return p;
}

FsmConfig config_from_json(const Json& j, const std::string& path) {
    require_object(j, path);
    FsmConfig c;
    c.version = req_int(j, "version", path);
    c.initial_state = req_string(j, "initial_state", path);

    const auto states_path = child(path, "states");
    const auto& states = require_array(require_field(j, "states", path), states_path);
    for (std::size_t i = 0; i < states.size(); ++i)
        c.states.push_back(state_from_json(states[i], index(states_path, i)));

    const auto transitions_path = child(path, "transitions");
    const auto& transitions =
        require_array(require_field(j, "transitions", path), transitions_path);
    for (std::size_t i = 0; i < transitions.size(); ++i)
        c.transitions.push_back(transition_from_json(transitions[i], index(transitions_path, i)));

    if (auto it = j.find("negative_constraints"); it != j.end()) {
        const auto p = child(path, "negative_constraints");
        require_array(*it, p);
        for (std::size_t i = 0; i < it->size(); ++i)
            c.negative_constraints.push_back(pattern_from_json((*it)[i], index(p, i)));
    }
    c.extra = extras(j, {"version", "initial_state", "states", "transitions",
                         "negative_constraints"});
    return c;
}

std::string serialize_config(const FsmConfig& config) {
    return to_json(config).dump(2) + "\n";
}

FsmConfig deserialize_config(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw SchemaError("$", std::string("invalid JSON: ") + e.what());
    }
    return config_from_json(j, "$");
}

FsmConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageFailure("cannot read config file " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return deserialize_config(buffer.str());
}

void save_config_file(const FsmConfig& config, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageFailure("cannot write config file " + path);
    out << serialize_config(config);
    if (!out) throw StorageFailure("write failed for " + path);
}

}  // namespace evofsm
