#include "evofsm/engine.hpp"

#include <algorithm>
#include <sstream>

#include <spdlog/spdlog.h>

#include "evofsm/text.hpp"
#include "json_util.hpp"

namespace evofsm {

using namespace detail;

std::string_view to_string(HaltReason reason) {
    switch (reason) {
        case HaltReason::Terminal: return "TERMINAL";
        case HaltReason::StepCap: return "STEP_CAP";
        case HaltReason::LoopDetected: return "LOOP_DETECTED";
        case HaltReason::Error: return "ERROR";
    }
    return "ERROR";
}

HaltReason halt_reason_from_string(std::string_view name) {
    if (name == "TERMINAL") return HaltReason::Terminal;
    if (name == "STEP_CAP") return HaltReason::StepCap;
    if (name == "LOOP_DETECTED") return HaltReason::LoopDetected;
    if (name == "ERROR") return HaltReason::Error;
    throw SchemaError("$.halted_reason", "unknown halt reason '" + std::string(name) + "'");
}

std::vector<std::string> Trajectory::state_sequence() const {
    std::vector<std::string> seq;
    seq.reserve(steps.size());
    for (const auto& s : steps) seq.push_back(s.state_id);
    return seq;
}

Json to_json(const Trajectory& t) {
    Json steps = Json::array();
    for (const auto& s : t.steps) {
        Json calls = Json::array();
        for (const auto& c : s.tool_calls) {
            calls.push_back({{"tool", c.tool},
                             {"input", c.input},
                             {"output_hash", c.output_hash},
                             {"output_preview", c.output_preview},
                             {"refused", c.refused},
                             {"failed", c.failed},
                             {"note", c.note}});
        }
        steps.push_back({{"index", s.index},
                         {"state_id", s.state_id},
                         {"agent_output", s.agent_output},
                         {"tool_calls", calls},
                         {"chosen_transition", s.chosen_transition ? Json(*s.chosen_transition) : Json()}});
    }
    Json j = {{"query", t.query},
              {"steps", steps},
              {"visit_counts", t.visit_counts},
              {"final_answer", t.final_answer ? Json(*t.final_answer) : Json()},
              {"halted_reason", to_string(t.halted_reason)}};
    if (!t.error.empty()) j["error"] = t.error;
    return j;
}

Trajectory trajectory_from_json(const Json& j, const std::string& path) {
    require_object(j, path);
    Trajectory t;
    t.query = req_string(j, "query", path);
    const auto steps_path = child(path, "steps");
    const auto& steps = require_array(require_field(j, "steps", path), steps_path);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto sp = index(steps_path, i);
        const auto& sj = require_object(steps[i], sp);
        StepRecord s;
        s.index = static_cast<std::size_t>(req_int(sj, "index", sp));
        s.state_id = req_string(sj, "state_id", sp);
        s.agent_output = opt_string(sj, "agent_output", sp);
        if (auto it = sj.find("tool_calls"); it != sj.end()) {
            const auto cp = child(sp, "tool_calls");
            require_array(*it, cp);
            for (std::size_t k = 0; k < it->size(); ++k) {
                const auto ccp = index(cp, k);
                const auto& cj = require_object((*it)[k], ccp);
                ToolCallRecord c;
                c.tool = req_string(cj, "tool", ccp);
                c.input = opt_string(cj, "input", ccp);
                c.output_hash = opt_string(cj, "output_hash", ccp);
                c.output_preview = opt_string(cj, "output_preview", ccp);
                c.refused = opt_bool(cj, "refused", ccp, false);
                c.failed = opt_bool(cj, "failed", ccp, false);
                c.note = opt_string(cj, "note", ccp);
                s.tool_calls.push_back(std::move(c));
            }
        }
        if (auto it = sj.find("chosen_transition"); it != sj.end() && !it->is_null())
            s.chosen_transition = as_string(*it, child(sp, "chosen_transition"));
        t.steps.push_back(std::move(s));
    }
    if (auto it = j.find("visit_counts"); it != j.end()) {
        require_object(*it, child(path, "visit_counts"));
        for (auto v = it->begin(); v != it->end(); ++v)
            t.visit_counts[v.key()] = static_cast<int>(as_int(v.value(), child(path, "visit_counts." + v.key())));
    }
    if (auto it = j.find("final_answer"); it != j.end() && !it->is_null())
        t.final_answer = as_string(*it, child(path, "final_answer"));
    t.halted_reason = halt_reason_from_string(req_string(j, "halted_reason", path));
    t.error = opt_string(j, "error", path);
    return t;
}

Json to_json(const ToolPayload& p) {
    return {{"step", p.step}, {"call", p.call}, {"tool", p.tool}, {"input", p.input}, {"output", p.output}};
}

// ---------------------------------------------------------------------------
// Context rendering
// ---------------------------------------------------------------------------

std::string render_context(const Trajectory& trajectory, const ToolLog& log, const RunLimits& limits) {
    const auto& steps = trajectory.steps;
    if (steps.empty()) return "(no previous steps)\n";
    const std::size_t first = steps.size() > limits.context_steps ? steps.size() - limits.context_steps : 0;
    std::ostringstream out;
    for (std::size_t i = first; i < steps.size(); ++i) {
        const auto& s = steps[i];
        out << "[step " << s.index << "] " << s.state_id << "\n";
        out << "OUTPUT: " << s.agent_output << "\n";
        for (std::size_t k = 0; k < s.tool_calls.size(); ++k) {
            const auto& c = s.tool_calls[k];
            out << "TOOL " << c.tool << "(" << c.input << ") -> ";
            if (c.refused || c.failed) {
                out << c.note << "\n";
                continue;
            }
            auto it = std::find_if(log.entries.begin(), log.entries.end(), [&](const ToolPayload& p) {
                return p.step == s.index && p.call == k;
            });
            const std::string& full = it != log.entries.end() ? it->output : c.output_preview;
            out << text::truncate_utf8(full, limits.tool_output_chars) << "\n";
        }
    }
    return out.str();
}

std::string evidence_digest(const Trajectory& trajectory, std::size_t max_steps) {
    std::ostringstream out;
    out << "STATE SEQUENCE:";
    for (const auto& s : trajectory.steps) out << ' ' << s.state_id;
    out << "\nHALTED: " << to_string(trajectory.halted_reason) << "\n";
    const auto& steps = trajectory.steps;
    const std::size_t first = steps.size() > max_steps ? steps.size() - max_steps : 0;
    for (std::size_t i = first; i < steps.size(); ++i) {
        const auto& s = steps[i];
        out << "- " << s.state_id << ": " << text::truncate_utf8(text::collapse_whitespace(s.agent_output), 160)
            << "\n";
        for (const auto& c : s.tool_calls) {
            out << "    " << c.tool << "(" << c.input << ")";
            if (c.refused || c.failed) {
                out << " " << c.note;
            } else {
                out << " -> " << text::truncate_utf8(text::collapse_whitespace(c.output_preview), 120);
            }
            out << "\n";
        }
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Routing
// ---------------------------------------------------------------------------

bool evaluate_predicate(const ConditionSpec& c, std::string_view current, const Trajectory& t) {
    const auto& a = c.args;
    if (c.predicate == "evidence_count_at_least") {
        const auto need = a.at(0).get<std::int64_t>();
        std::int64_t have = 0;
        for (const auto& s : t.steps)
            for (const auto& call : s.tool_calls) have += call.is_evidence() ? 1 : 0;
        return have >= need;
    }
    if (c.predicate == "steps_exceeded") {
        return static_cast<std::int64_t>(t.steps.size()) > a.at(0).get<std::int64_t>();
    }
    if (c.predicate == "last_output_contains") {
        if (t.steps.empty()) return false;
        return text::contains(t.steps.back().agent_output, a.at(0).get<std::string>());
    }
    if (c.predicate == "visit_count_exceeded") {
        std::string state(current);
        std::int64_t limit = 0;
        if (a.size() == 2) {
            state = a.at(0).get<std::string>();
            limit = a.at(1).get<std::int64_t>();
        } else {
            limit = a.at(0).get<std::int64_t>();
        }
        auto it = t.visit_counts.find(state);
        return it != t.visit_counts.end() && it->second > limit;
    }
    throw Error("unknown predicate '" + c.predicate + "'");
}

namespace {

std::string router_prompt(std::string_view current, const Trajectory& t, const ToolLog* log,
                          const RunLimits& limits, const std::vector<const TransitionRule*>& candidates) {
    std::ostringstream out;
    out << "CURRENT STATE: " << current << "\n";
    out << "QUERY: " << t.query << "\n\n";
    out << "RECENT CONTEXT:\n";
    if (log) {
        out << render_context(t, *log, limits);
    } else {
        out << evidence_digest(t, limits.context_steps);
    }
    out << "\nCANDIDATES:\n";
    for (const auto* c : candidates) out << "- " << c->to_state << ": " << c->condition.guidance << "\n";
    out << "\nReply with exactly one candidate state id, or NONE if no candidate applies.\n";
    return out.str();
}

bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

// Position of `word` in `text` as a whole token, or npos.
std::size_t find_word(std::string_view text, std::string_view word) {
    std::size_t pos = 0;
    while ((pos = text.find(word, pos)) != std::string_view::npos) {
        const bool left = pos == 0 || !is_word_char(text[pos - 1]);
        const auto end = pos + word.size();
        const bool right = end >= text.size() || !is_word_char(text[end]);
        if (left && right) return pos;
        ++pos;
    }
    return std::string_view::npos;
}

}  // namespace

RouteDecision route_decision(const FsmConfig& config, std::string_view current, const Trajectory& trajectory,
                             ChatBackend& router, const RunLimits& limits, const ToolLog* log) {
    std::vector<const TransitionRule*> usable;
    for (const auto* t : config.outgoing(current)) {
        if (config.forbids_edge(t->from_state, t->to_state)) {
            spdlog::warn("skipping transition '{}' ({} -> {}): forbidden by experience memory", t->id,
                         t->from_state, t->to_state);
            continue;
        }
        usable.push_back(t);
    }

    auto fallback_always = [&]() -> const TransitionRule* {
        for (const auto* t : usable)
            if (t->condition.kind == ConditionKind::Always) return t;
        return nullptr;
    };

    bool router_consulted = false;
    for (const auto* t : usable) {
        switch (t->condition.kind) {
            case ConditionKind::Always:
                return {t->id, t->to_state};
            case ConditionKind::Predicate:
                if (evaluate_predicate(t->condition, current, trajectory)) return {t->id, t->to_state};
                break;
            case ConditionKind::RouterJudged: {
                if (router_consulted) break;
                router_consulted = true;
                std::vector<const TransitionRule*> candidates;
                for (const auto* c : usable)
                    if (c->condition.kind == ConditionKind::RouterJudged) candidates.push_back(c);

                ChatRequest request;
                request.role_label = "router";
                request.messages = {
                    {"system", "You are the transition router of a research workflow state machine."},
                    {"user", router_prompt(current, trajectory, log, limits, candidates)}};
                const auto reply = text::trim(router.chat(request).text);

                const TransitionRule* chosen = nullptr;
                std::size_t best_pos = std::string_view::npos;
                for (const auto* c : candidates) {
                    if (reply == c->to_state || reply == c->id) {
                        chosen = c;
                        break;
                    }
                    for (const auto& name : {c->to_state, c->id}) {
                        const auto pos = find_word(reply, name);
                        if (pos < best_pos) {
                            best_pos = pos;
                            chosen = c;
                        }
                    }
                }
                if (chosen) return {chosen->id, chosen->to_state};
                if (text::to_lower(reply).rfind("none", 0) == 0) break;

                if (const auto* fb = fallback_always()) {
                    spdlog::warn("router reply names no candidate ('{}'); falling back to '{}'",
                                 text::truncate_utf8(reply, 80), fb->id);
                    return {fb->id, fb->to_state};
                }
                throw RouterParseError("router reply names no candidate: " + text::truncate_utf8(reply, 200));
            }
        }
    }
    throw NoTransitionFired("no transition fired from state '" + std::string(current) + "'");
}

std::string route(const FsmConfig& config, std::string_view current, const Trajectory& trajectory,
                  ChatBackend& router) {
    return route_decision(config, current, trajectory, router).to_state;
}

// ---------------------------------------------------------------------------
// State execution
// ---------------------------------------------------------------------------

namespace {

std::string state_system_prompt(const StateDef& state, const RunLimits& limits) {
    std::ostringstream out;
    out << "You are the '" << (state.name.empty() ? state.id : state.name)
        << "' agent of a multi-step research workflow.\n";
    out << "STATE: " << state.id << "\n";
    out << "INSTRUCTION:\n" << state.instruction << "\n\n";
    out << "ALLOWED TOOLS: ";
    if (state.allowed_tools.empty()) {
        out << "none";
    } else {
        for (std::size_t i = 0; i < state.allowed_tools.size(); ++i)
            out << (i ? ", " : "") << state.allowed_tools[i];
    }
    out << "\n";
    if (!state.allowed_tools.empty()) {
        out << "To call a tool, emit a fenced block:\n```tool\n{\"name\": \"<tool>\", \"input\": \"<text>\"}\n```\n"
            << "At most " << limits.max_tool_calls << " tool calls per step.\n";
    }
    if (state.is_terminal) out << "This is the final state: reply with the final answer only.\n";
    return out.str();
}

}  // namespace

StepRecord execute_state(const FsmConfig& config, std::string_view state_id, Trajectory& trajectory,
                         ChatBackend& agent, const ToolRegistry& tools, ToolLog& log, const RunLimits& limits) {
    const auto* state = config.find_state(state_id);
    if (!state) throw Error("unknown state '" + std::string(state_id) + "'");
    if (trajectory.steps.size() >= limits.max_steps) throw Error("step cap reached");

    StepRecord step;
    step.index = trajectory.steps.size();
    step.state_id = state->id;

    ChatRequest request;
    request.role_label = "agent";
    request.messages = {
        {"system", state_system_prompt(*state, limits)},
        {"user", "QUERY: " + trajectory.query + "\n\nRECENT CONTEXT:\n" + render_context(trajectory, log, limits)}};
    const auto first = agent.chat(request);

    std::string tool_report;
    std::size_t call_no = 0;
    for (const auto& call : first.tool_calls) {
        ToolCallRecord rec;
        rec.tool = call.name;
        rec.input = call.input;
        if (call_no >= limits.max_tool_calls) {
            rec.refused = true;
            rec.note = "REFUSED: more than " + std::to_string(limits.max_tool_calls) + " tool calls in one step";
        } else if (!state->allows(call.name)) {
            rec.refused = true;
            rec.note = "REFUSED: tool '" + call.name + "' is not permitted in state '" + state->id + "'";
        } else if (config.forbids_tool(state->id, call.name)) {
            rec.refused = true;
            rec.note = "REFUSED: tool '" + call.name + "' in state '" + state->id + "' is forbidden by experience memory";
        } else if (!tools.has(call.name)) {
            rec.refused = true;
            rec.note = "REFUSED: no tool named '" + call.name + "' is registered";
        } else {
            try {
                const auto results = tools.call(call.name, call.input);
                const auto output = render_tool_results(results);
                rec.output_hash = text::hash_hex(output);
                rec.output_preview = text::truncate_utf8(output, kPreviewChars);
                log.entries.push_back({step.index, call_no, call.name, call.input, output});
                tool_report += "TOOL " + call.name + "(" + call.input + ") -> " +
                               text::truncate_utf8(output, limits.tool_output_chars) + "\n\n";
            } catch (const BackendFailure& e) {
                rec.failed = true;
                rec.note = std::string("ERROR: ") + e.what();
            }
        }
        if (rec.refused) spdlog::info("step {}: {}", step.index, rec.note);
        if (rec.refused || rec.failed) tool_report += "TOOL " + call.name + "(" + call.input + ") -> " + rec.note + "\n\n";
        step.tool_calls.push_back(std::move(rec));
        ++call_no;
    }

    if (step.tool_calls.empty()) {
        step.agent_output = strip_tool_blocks(first.text);
    } else {
        request.messages.push_back({"assistant", first.text});
        request.messages.push_back({"tool", "TOOL RESULTS:\n" + tool_report +
                                                "Write this state's output from the results above."});
        const auto second = agent.chat(request);
        if (!second.tool_calls.empty())
            spdlog::warn("step {}: ignoring tool calls requested after tool results", step.index);
        step.agent_output = strip_tool_blocks(second.text);
    }

    trajectory.steps.push_back(step);
    trajectory.visit_counts[step.state_id] += 1;
    return step;
}

Trajectory run(const FsmConfig& config, std::string_view query, const Backends& backends, const RunLimits& limits,
               ToolLog* log) {
    ToolLog local;
    ToolLog& sink = log ? *log : local;

    Trajectory t;
    t.query = std::string(query);
    std::string current = config.initial_state;
    while (true) {
        if (t.steps.size() >= limits.max_steps) {
            t.halted_reason = HaltReason::StepCap;
            break;
        }
        const auto* state = config.find_state(current);
        if (!state) {
            t.halted_reason = HaltReason::Error;
            t.error = "unknown state '" + current + "'";
            break;
        }
        try {
            execute_state(config, current, t, backends.for_role("agent"), backends.tools, sink, limits);
        } catch (const std::exception& e) {
            t.halted_reason = HaltReason::Error;
            t.error = e.what();
            break;
        }
        if (state->is_terminal) {
            t.final_answer = t.steps.back().agent_output;
            t.halted_reason = HaltReason::Terminal;
            break;
        }
        if (t.visit_counts[current] > limits.loop_threshold) {
            t.halted_reason = HaltReason::LoopDetected;
            break;
        }
        try {
            auto decision = route_decision(config, current, t, backends.for_role("router"), limits, &sink);
            t.steps.back().chosen_transition = decision.transition_id;
            current = decision.to_state;
        } catch (const std::exception& e) {
            t.halted_reason = HaltReason::Error;
            t.error = e.what();
            break;
        }
    }
    return t;
}

}  // namespace evofsm
