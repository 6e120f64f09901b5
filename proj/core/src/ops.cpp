#include "evofsm/ops.hpp"

#include <algorithm>
#include <set>

#include "json_util.hpp"

namespace evofsm {

using namespace detail;

std::string_view to_string(OpKind kind) {
    switch (kind) {
        case OpKind::AddState: return "ADD_STATE";
        case OpKind::DeleteState: return "DELETE_STATE";
        case OpKind::ModifyTransition: return "MODIFY_TRANSITION";
        case OpKind::ReviseInstruction: return "REVISE_INSTRUCTION";
    }
    return "ADD_STATE";
}

bool is_flow_op(OpKind kind) { return kind != OpKind::ReviseInstruction; }

std::string_view to_string(RejectCode code) {
    switch (code) {
        case RejectCode::StateCap: return "STATE_CAP";
        case RejectCode::DeleteInitial: return "DELETE_INITIAL";
        case RejectCode::DeleteLastTerminal: return "DELETE_LAST_TERMINAL";
        case RejectCode::UnknownTarget: return "UNKNOWN_TARGET";
        case RejectCode::WouldOrphan: return "WOULD_ORPHAN";
        case RejectCode::ForbiddenByMemory: return "FORBIDDEN_BY_MEMORY";
        case RejectCode::InvalidResult: return "INVALID_RESULT";
        case RejectCode::MalformedOp: return "MALFORMED_OP";
    }
    return "INVALID_RESULT";
}

std::string AtomicOp::label() const {
    std::string target = std::visit(
        [](const auto& p) -> std::string {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, AddStatePayload>) return p.state.id;
            else if constexpr (std::is_same_v<T, DeleteStatePayload>) return p.state_id;
            else if constexpr (std::is_same_v<T, ModifyTransitionPayload>) return p.transition_id;
            else return p.state_id;
        },
        payload);
    return std::string(to_string(kind())) + "(" + target + ")";
}

namespace {

[[noreturn]] void reject(RejectCode code, const std::string& detail) { throw OpRejected(code, detail); }

void require_state(const FsmConfig& c, const std::string& id, std::string_view what) {
    if (!c.find_state(id)) reject(RejectCode::UnknownTarget, std::string(what) + " '" + id + "' is not a state");
}

void check_edge_allowed(const FsmConfig& c, const TransitionRule& t, const ApplyOptions& options) {
    if (options.check_memory && c.forbids_edge(t.from_state, t.to_state)) {
        reject(RejectCode::ForbiddenByMemory,
               "edge " + t.from_state + " -> " + t.to_state + " is a remembered failure path");
    }
}

void erase_transition(FsmConfig& c, const std::string& id) {
    std::erase_if(c.transitions, [&](const TransitionRule& t) { return t.id == id; });
}

// Validates `result` and maps violations onto rejection codes.
void finalize(FsmConfig& result, const FsmConfig& before, const ApplyOptions& options) {
    result.version = before.version + 1;
    const auto report = validate_config(result, options.max_states);
    if (report.ok()) return;
    if (report.has(ViolationCode::StateCapExceeded)) reject(RejectCode::StateCap, report.to_text());
    if (report.has(ViolationCode::NontermDeadEnd)) reject(RejectCode::WouldOrphan, report.to_text());
    reject(RejectCode::InvalidResult, report.to_text());
}

ApplyResult apply_add(const FsmConfig& c, const AtomicOp& op, const AddStatePayload& p,
                      const ApplyOptions& options) {
    if (p.state.id.empty()) reject(RejectCode::MalformedOp, "new state has an empty id");
    if (c.find_state(p.state.id)) reject(RejectCode::InvalidResult, "state '" + p.state.id + "' already exists");
    if (c.states.size() >= options.max_states) {
        reject(RejectCode::StateCap, "config already has " + std::to_string(c.states.size()) + " states");
    }

    FsmConfig next = c;
    std::vector<TransitionRule> removed;
    for (const auto& id : p.replaces) {
        const auto* t = c.find_transition(id);
        if (!t) reject(RejectCode::UnknownTarget, "replaced transition '" + id + "' does not exist");
        if (std::any_of(removed.begin(), removed.end(), [&](const auto& r) { return r.id == id; }))
            reject(RejectCode::MalformedOp, "transition '" + id + "' replaced twice");
        removed.push_back(*t);
        erase_transition(next, id);
    }

    next.states.push_back(p.state);
    for (const auto& t : p.inbound) {
        if (t.to_state != p.state.id)
            reject(RejectCode::MalformedOp, "inbound transition '" + t.id + "' does not enter the new state");
        require_state(next, t.from_state, "inbound source");
        check_edge_allowed(c, t, options);
    }
    for (const auto& t : p.outbound) {
        if (t.from_state != p.state.id)
            reject(RejectCode::MalformedOp, "outbound transition '" + t.id + "' does not leave the new state");
        require_state(next, t.to_state, "outbound target");
        check_edge_allowed(c, t, options);
    }
    if (options.check_memory) {
        for (const auto& tool : p.state.allowed_tools) {
            if (c.forbids_tool(p.state.id, tool))
                reject(RejectCode::ForbiddenByMemory, "tool '" + tool + "' in state '" + p.state.id + "'");
        }
    }
    for (const auto* group : {&p.inbound, &p.outbound}) {
        for (const auto& t : *group) {
            if (next.find_transition(t.id))
                reject(RejectCode::InvalidResult, "transition id '" + t.id + "' already in use");
            next.transitions.push_back(t);
        }
    }
    finalize(next, c, options);

    DeleteStatePayload inv;
    inv.state_id = p.state.id;
    inv.restore = removed;
    return {std::move(next), AtomicOp{inv, "undo " + op.label()}};
}

ApplyResult apply_delete(const FsmConfig& c, const AtomicOp& op, const DeleteStatePayload& p,
                         const ApplyOptions& options) {
    const auto* victim = c.find_state(p.state_id);
    if (!victim) reject(RejectCode::UnknownTarget, "state '" + p.state_id + "' does not exist");
    if (p.state_id == c.initial_state) reject(RejectCode::DeleteInitial, "state '" + p.state_id + "' is the initial state");
    if (victim->is_terminal) {
        const auto terminals = std::count_if(c.states.begin(), c.states.end(), [](const auto& s) { return s.is_terminal; });
        if (terminals <= 1) reject(RejectCode::DeleteLastTerminal, "state '" + p.state_id + "' is the only terminal state");
    }

    std::set<std::string> rewired;
    for (const auto& r : p.rewiring) {
        const auto* t = c.find_transition(r.transition_id);
        if (!t || t->to_state != p.state_id || t->from_state == p.state_id) {
            reject(RejectCode::UnknownTarget,
                   "transition '" + r.transition_id + "' is not an inbound edge of '" + p.state_id + "'");
        }
        if (!rewired.insert(r.transition_id).second)
            reject(RejectCode::MalformedOp, "transition '" + r.transition_id + "' rewired twice");
        if (r.retarget_to) {
            if (*r.retarget_to == p.state_id) reject(RejectCode::UnknownTarget, "cannot retarget onto the deleted state");
            require_state(c, *r.retarget_to, "retarget");
            TransitionRule moved = *t;
            moved.to_state = *r.retarget_to;
            check_edge_allowed(c, moved, options);
        }
    }

    // Inverse material: the state and every edge touching it, as they are now.
    AddStatePayload inv;
    inv.state = *victim;
    for (const auto& t : c.transitions) {
        if (t.from_state == p.state_id) {
            inv.outbound.push_back(t);
        } else if (t.to_state == p.state_id) {
            inv.inbound.push_back(t);
        }
    }

    FsmConfig next = c;
    std::erase_if(next.states, [&](const StateDef& s) { return s.id == p.state_id; });
    std::erase_if(next.transitions, [&](const TransitionRule& t) {
        if (t.from_state == p.state_id) return true;
        if (t.to_state != p.state_id) return false;
        auto it = std::find_if(p.rewiring.begin(), p.rewiring.end(),
                               [&](const Rewire& r) { return r.transition_id == t.id; });
        return it == p.rewiring.end() || !it->retarget_to;
    });
    for (const auto& r : p.rewiring) {
        if (!r.retarget_to) continue;
        next.find_transition(r.transition_id)->to_state = *r.retarget_to;
        inv.replaces.push_back(r.transition_id);
    }
    for (const auto& t : p.restore) {
        if (t.from_state == p.state_id || t.to_state == p.state_id)
            reject(RejectCode::MalformedOp, "restored transition '" + t.id + "' touches the deleted state");
        require_state(next, t.from_state, "restored source");
        require_state(next, t.to_state, "restored target");
        check_edge_allowed(c, t, options);
        if (next.find_transition(t.id))
            reject(RejectCode::InvalidResult, "transition id '" + t.id + "' already in use");
        next.transitions.push_back(t);
        inv.replaces.push_back(t.id);
    }
    finalize(next, c, options);
    return {std::move(next), AtomicOp{inv, "undo " + op.label()}};
}

ApplyResult apply_modify(const FsmConfig& c, const AtomicOp& op, const ModifyTransitionPayload& p,
                         const ApplyOptions& options) {
    const auto* current = c.find_transition(p.transition_id);
    if (!current) reject(RejectCode::UnknownTarget, "transition '" + p.transition_id + "' does not exist");
    if (!p.to_state && !p.priority && !p.condition) reject(RejectCode::MalformedOp, "modification changes nothing");

    ModifyTransitionPayload inv;
    inv.transition_id = p.transition_id;
    FsmConfig next = c;
    auto* t = next.find_transition(p.transition_id);
    if (p.to_state) {
        require_state(c, *p.to_state, "new target");
        inv.to_state = t->to_state;
        t->to_state = *p.to_state;
        if (*p.to_state != current->to_state) check_edge_allowed(c, *t, options);
    }
    if (p.priority) {
        inv.priority = t->priority;
        t->priority = *p.priority;
    }
    if (p.condition) {
        inv.condition = t->condition;
        t->condition = *p.condition;
    }
    finalize(next, c, options);
    return {std::move(next), AtomicOp{inv, "undo " + op.label()}};
}

ApplyResult apply_revise(const FsmConfig& c, const AtomicOp& op, const ReviseInstructionPayload& p,
                         const ApplyOptions& options) {
    if (!c.find_state(p.state_id)) reject(RejectCode::UnknownTarget, "state '" + p.state_id + "' does not exist");
    FsmConfig next = c;
    auto* s = next.find_state(p.state_id);
    ReviseInstructionPayload inv{p.state_id, s->instruction};
    s->instruction = p.instruction;
    finalize(next, c, options);
    return {std::move(next), AtomicOp{inv, "undo " + op.label()}};
}

}  // namespace

ApplyResult apply_op(const FsmConfig& config, const AtomicOp& op, const ApplyOptions& options) {
    return std::visit(
        [&](const auto& p) -> ApplyResult {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, AddStatePayload>) return apply_add(config, op, p, options);
            else if constexpr (std::is_same_v<T, DeleteStatePayload>) return apply_delete(config, op, p, options);
            else if constexpr (std::is_same_v<T, ModifyTransitionPayload>) return apply_modify(config, op, p, options);
            else return apply_revise(config, op, p, options);
        },
        op.payload);
}

FsmConfig undo(const FsmConfig& config, const AtomicOp& inverse, std::size_t max_states) {
    return apply_op(config, inverse, ApplyOptions{max_states, false}).config;
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

Json transitions_json(const std::vector<TransitionRule>& ts) {
    Json out = Json::array();
    for (const auto& t : ts) out.push_back(to_json(t));
    return out;
}

std::vector<TransitionRule> transitions_from(const Json& j, std::string_view key, const std::string& path) {
    std::vector<TransitionRule> out;
    auto it = j.find(key);
    if (it == j.end()) return out;
    const auto p = child(path, key);
    require_array(*it, p);
    for (std::size_t i = 0; i < it->size(); ++i) out.push_back(transition_from_json((*it)[i], index(p, i)));
    return out;
}

void reject_unknown_keys(const Json& j, std::initializer_list<std::string_view> known, const std::string& path) {
    const auto unknown = extras(j, known);
    if (!unknown.empty()) throw SchemaError(child(path, unknown.begin().key()), "unknown field in op");
}

}  // namespace

Json to_json(const AtomicOp& op) {
    Json j = {{"op", to_string(op.kind())}, {"rationale", op.rationale}};
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, AddStatePayload>) {
                j["state"] = to_json(p.state);
                j["inbound"] = transitions_json(p.inbound);
                j["outbound"] = transitions_json(p.outbound);
                j["replaces"] = p.replaces;
            } else if constexpr (std::is_same_v<T, DeleteStatePayload>) {
                j["state_id"] = p.state_id;
                j["rewire"] = Json::array();
                for (const auto& r : p.rewiring)
                    j["rewire"].push_back({{"transition", r.transition_id}, {"to", r.retarget_to ? Json(*r.retarget_to) : Json()}});
                j["restore"] = transitions_json(p.restore);
            } else if constexpr (std::is_same_v<T, ModifyTransitionPayload>) {
                j["transition"] = p.transition_id;
                if (p.to_state) j["to"] = *p.to_state;
                if (p.priority) j["priority"] = *p.priority;
                if (p.condition) j["condition"] = to_json(*p.condition);
            } else {
                j["state_id"] = p.state_id;
                j["instruction"] = p.instruction;
            }
        },
        op.payload);
    return j;
}

AtomicOp op_from_json(const Json& j, const std::string& path) {
    require_object(j, path);
    const auto kind = req_string(j, "op", path);
    AtomicOp op;
    op.rationale = opt_string(j, "rationale", path);
    if (kind == "ADD_STATE") {
        reject_unknown_keys(j, {"op", "rationale", "state", "inbound", "outbound", "replaces"}, path);
        AddStatePayload p;
        p.state = state_from_json(require_field(j, "state", path), child(path, "state"));
        p.inbound = transitions_from(j, "inbound", path);
        p.outbound = transitions_from(j, "outbound", path);
        p.replaces = opt_string_list(j, "replaces", path);
        op.payload = std::move(p);
    } else if (kind == "DELETE_STATE") {
        reject_unknown_keys(j, {"op", "rationale", "state_id", "rewire", "restore"}, path);
        DeleteStatePayload p;
        p.state_id = req_string(j, "state_id", path);
        if (auto it = j.find("rewire"); it != j.end()) {
            const auto rp = child(path, "rewire");
            require_array(*it, rp);
            for (std::size_t i = 0; i < it->size(); ++i) {
                const auto ep = index(rp, i);
                const auto& e = require_object((*it)[i], ep);
                Rewire r;
                r.transition_id = req_string(e, "transition", ep);
                if (auto to = e.find("to"); to != e.end() && !to->is_null()) r.retarget_to = as_string(*to, child(ep, "to"));
                p.rewiring.push_back(std::move(r));
            }
        }
        p.restore = transitions_from(j, "restore", path);
        op.payload = std::move(p);
    } else if (kind == "MODIFY_TRANSITION") {
        reject_unknown_keys(j, {"op", "rationale", "transition", "to", "priority", "condition"}, path);
        ModifyTransitionPayload p;
        p.transition_id = req_string(j, "transition", path);
        if (j.contains("to")) p.to_state = req_string(j, "to", path);
        if (j.contains("priority")) p.priority = static_cast<int>(req_int(j, "priority", path));
        if (j.contains("condition")) p.condition = condition_from_json(j.at("condition"), child(path, "condition"));
        op.payload = std::move(p);
    } else if (kind == "REVISE_INSTRUCTION") {
        reject_unknown_keys(j, {"op", "rationale", "state_id", "instruction"}, path);
        ReviseInstructionPayload p;
        p.state_id = req_string(j, "state_id", path);
        p.instruction = req_string(j, "instruction", path);
        op.payload = std::move(p);
    } else {
        throw SchemaError(child(path, "op"), "unknown op kind '" + kind + "'");
    }
    return op;
}

Json to_json(const OpLogEntry& e) {
    return {{"iteration", e.iteration},
            {"op", to_json(e.op)},
            {"inverse", to_json(e.inverse)},
            {"pre_version", e.pre_version},
            {"post_version", e.post_version}};
}

OpLogEntry op_log_entry_from_json(const Json& j, const std::string& path) {
    require_object(j, path);
    OpLogEntry e;
    e.iteration = static_cast<int>(req_int(j, "iteration", path));
    e.op = op_from_json(require_field(j, "op", path), child(path, "op"));
    e.inverse = op_from_json(require_field(j, "inverse", path), child(path, "inverse"));
    e.pre_version = req_int(j, "pre_version", path);
    e.post_version = req_int(j, "post_version", path);
    return e;
}

}  // namespace evofsm
