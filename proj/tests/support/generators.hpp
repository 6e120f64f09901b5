#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "evofsm/experience.hpp"
#include "evofsm/fsm.hpp"
#include "evofsm/ops.hpp"

namespace evofsm::gen {

using Rng = std::mt19937_64;

inline int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline bool chance(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
    return v[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(v.size()) - 1))];
}

inline std::string random_words(Rng& rng, int n) {
    static const std::vector<std::string> words = {
        "search", "verify", "source", "figure", "report", "annual", "quote", "exact", "unit", "evidence",
        "primary", "check", "date", "browse", "answer", "refine", "query", "table", "value", "page"};
    std::string out;
    for (int i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += pick(rng, words);
    }
    return out;
}

inline ConditionSpec random_condition(Rng& rng) {
    switch (uniform(rng, 0, 5)) {
        case 0: return ConditionSpec::when("evidence_count_at_least", Json::array({uniform(rng, 0, 3)}));
        case 1: return ConditionSpec::when("steps_exceeded", Json::array({uniform(rng, 1, 12)}));
        case 2: return ConditionSpec::when("last_output_contains", Json::array({random_words(rng, 1)}));
        case 3: return ConditionSpec::when("visit_count_exceeded", Json::array({uniform(rng, 1, 4)}));
        case 4: return ConditionSpec::judged(random_words(rng, 4));
        default: return ConditionSpec::always();
    }
}

inline int next_priority(const FsmConfig& c, const std::string& from) {
    int p = -1;
    for (const auto& t : c.transitions)
        if (t.from_state == from) p = std::max(p, t.priority);
    return p + 1;
}

/**
 * Valid config with 2..max_states states: a spine s0 -> s1 -> ... -> s(n-1)
 * (terminal) guarantees reachability; extra edges are random.
 */
inline FsmConfig random_config(Rng& rng, int max_states = 8) {
    FsmConfig c;
    const int n = uniform(rng, 2, max_states);
    for (int i = 0; i < n; ++i) {
        StateDef s;
        s.id = "s" + std::to_string(i);
        s.name = "State " + std::to_string(i);
        s.instruction = random_words(rng, uniform(rng, 3, 10));
        if (chance(rng, 0.5)) s.allowed_tools.push_back("search");
        if (chance(rng, 0.4)) s.allowed_tools.push_back("browse");
        s.is_terminal = i == n - 1 || (i > 0 && chance(rng, 0.15));
        if (chance(rng, 0.1)) s.extra["color"] = random_words(rng, 1);
        c.states.push_back(std::move(s));
    }
    c.initial_state = "s0";
    int tid = 0;
    for (int i = 0; i + 1 < n; ++i) {
        c.transitions.push_back({"t" + std::to_string(tid++), "s" + std::to_string(i), "s" + std::to_string(i + 1),
                                 random_condition(rng), 0, Json::object()});
    }
    const int extra = uniform(rng, 0, n * 2);
    for (int k = 0; k < extra; ++k) {
        const auto from = "s" + std::to_string(uniform(rng, 0, n - 1));
        const auto to = "s" + std::to_string(uniform(rng, 0, n - 1));
        c.transitions.push_back(
            {"t" + std::to_string(tid++), from, to, random_condition(rng), next_priority(c, from), Json::object()});
    }
    if (chance(rng, 0.3)) {
        c.negative_constraints.push_back({PatternKind::TransitionEdge, "s" + std::to_string(uniform(rng, 0, n - 1)),
                                          "x" + std::to_string(uniform(rng, 0, 9)), random_words(rng, 3)});
    }
    if (chance(rng, 0.2)) {
        c.negative_constraints.push_back({PatternKind::ToolInState, "s" + std::to_string(uniform(rng, 0, n - 1)),
                                          "browse", random_words(rng, 2)});
    }
    c.version = uniform(rng, 1, 50);
    if (chance(rng, 0.1)) c.extra["note"] = random_words(rng, 2);
    return c;
}

inline std::string fresh_state_id(const FsmConfig& c, Rng& rng) {
    while (true) {
        auto id = "n" + std::to_string(uniform(rng, 0, 9999));
        if (!c.find_state(id)) return id;
    }
}

inline std::string fresh_transition_id(const FsmConfig& c, Rng& rng, const std::vector<std::string>& taken = {}) {
    while (true) {
        auto id = "x" + std::to_string(uniform(rng, 0, 99999));
        if (!c.find_transition(id) && std::find(taken.begin(), taken.end(), id) == taken.end()) return id;
    }
}

inline std::vector<std::string> state_ids(const FsmConfig& c) {
    std::vector<std::string> ids;
    for (const auto& s : c.states) ids.push_back(s.id);
    return ids;
}

inline AtomicOp random_revise(Rng& rng, const FsmConfig& c) {
    return {ReviseInstructionPayload{pick(rng, state_ids(c)), random_words(rng, uniform(rng, 2, 12))},
            random_words(rng, 3)};
}

/// A random flow op; it may or may not be accepted by apply_op.
inline AtomicOp random_flow_op(Rng& rng, const FsmConfig& c) {
    const auto ids = state_ids(c);
    switch (uniform(rng, 0, 2)) {
        case 0: {
            AddStatePayload p;
            p.state.id = fresh_state_id(c, rng);
            p.state.name = p.state.id;
            p.state.instruction = random_words(rng, 5);
            p.state.is_terminal = chance(rng, 0.2);
            std::vector<std::string> taken;
            const auto from = pick(rng, ids);
            if (chance(rng, 0.4) && !c.transitions.empty()) p.replaces.push_back(pick(rng, c.transitions).id);
            auto in_id = fresh_transition_id(c, rng);
            taken.push_back(in_id);
            p.inbound.push_back({in_id, from, p.state.id, random_condition(rng), next_priority(c, from), Json::object()});
            if (!p.state.is_terminal || chance(rng, 0.3)) {
                auto out_id = fresh_transition_id(c, rng, taken);
                p.outbound.push_back({out_id, p.state.id, pick(rng, ids), ConditionSpec::always(), 0, Json::object()});
            }
            return {p, random_words(rng, 3)};
        }
        case 1: {
            DeleteStatePayload p;
            p.state_id = chance(rng, 0.1) ? c.initial_state : pick(rng, ids);
            for (const auto& t : c.transitions) {
                if (t.to_state == p.state_id && t.from_state != p.state_id && chance(rng, 0.5)) {
                    std::optional<std::string> target;
                    const auto& cand = pick(rng, ids);
                    if (cand != p.state_id) target = cand;
                    p.rewiring.push_back({t.id, target});
                }
            }
            return {p, random_words(rng, 3)};
        }
        default: {
            ModifyTransitionPayload p;
            if (c.transitions.empty()) return random_revise(rng, c);
            const auto& t = pick(rng, c.transitions);
            p.transition_id = t.id;
            if (chance(rng, 0.6)) p.to_state = pick(rng, ids);
            if (chance(rng, 0.3)) p.priority = uniform(rng, 0, 8);
            if (chance(rng, 0.5)) p.condition = random_condition(rng);
            if (!p.to_state && !p.priority && !p.condition) p.condition = ConditionSpec::always();
            return {p, random_words(rng, 3)};
        }
    }
}

inline AtomicOp random_op(Rng& rng, const FsmConfig& c) {
    return chance(rng, 0.3) ? random_revise(rng, c) : random_flow_op(rng, c);
}

inline std::vector<double> random_unit_vector(Rng& rng, std::size_t dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(dim);
    double s = 0;
    for (auto& x : v) {
        x = n(rng);
        s += x * x;
    }
    s = std::sqrt(s);
    for (auto& x : v) x /= s;
    return v;
}

/// Record without id/created_at (assigned by the pool).
inline ExperienceRecord random_record(Rng& rng, std::size_t dim) {
    ExperienceRecord r;
    r.query_text = random_words(rng, uniform(rng, 3, 9)) + (chance(rng, 0.2) ? " \"quoted\" \\ ünï" : "");
    r.query_embedding = random_unit_vector(rng, dim);
    r.outcome = chance(rng, 0.5) ? Outcome::Success : Outcome::Failure;
    r.config_snapshot = random_config(rng, 6);
    const int ops = uniform(rng, 0, 3);
    for (int i = 0; i < ops; ++i) r.op_sequence.push_back(random_op(rng, r.config_snapshot));
    r.rationale = random_words(rng, uniform(rng, 0, 12));
    if (r.outcome == Outcome::Failure) {
        const int n = uniform(rng, 0, 2);
        for (int i = 0; i < n; ++i)
            r.failure_constraints.push_back({PatternKind::TransitionEdge, "s" + std::to_string(uniform(rng, 0, 4)),
                                             "s" + std::to_string(uniform(rng, 0, 4)), random_words(rng, 4)});
    }
    return r;
}

}  // namespace evofsm::gen
