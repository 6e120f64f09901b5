#include "evofsm/evolution.hpp"

#include <sstream>

#include <spdlog/spdlog.h>

#include "evofsm/text.hpp"

namespace evofsm {

std::string render_config_compact(const FsmConfig& config) {
    std::ostringstream out;
    out << "initial: " << config.initial_state << "\n";
    out << "states:\n";
    for (const auto& s : config.states) {
        out << "  " << s.id;
        if (s.is_terminal) out << " (terminal)";
        if (!s.allowed_tools.empty()) {
            out << " [tools:";
            for (const auto& t : s.allowed_tools) out << ' ' << t;
            out << "]";
        }
        out << ": " << text::collapse_whitespace(s.instruction) << "\n";
    }
    out << "transitions:\n";
    for (const auto& t : config.transitions) {
        out << "  " << t.id << ": " << t.from_state << " -> " << t.to_state << " p" << t.priority << " "
            << to_string(t.condition.kind);
        if (t.condition.kind == ConditionKind::Predicate)
            out << " " << t.condition.predicate << "(" << t.condition.args.dump() << ")";
        if (t.condition.kind == ConditionKind::RouterJudged) out << " \"" << t.condition.guidance << "\"";
        out << "\n";
    }
    return out.str();
}

namespace {

constexpr std::string_view kProposerSystem =
    "You repair a research workflow state machine. You may ONLY use these atomic operations:\n"
    "- ADD_STATE: {\"op\":\"ADD_STATE\",\"state\":{\"id\",\"name\",\"instruction\",\"allowed_tools\",\"is_terminal\"},"
    "\"inbound\":[transition],\"outbound\":[transition],\"replaces\":[transition id],\"rationale\"}\n"
    "- DELETE_STATE: {\"op\":\"DELETE_STATE\",\"state_id\",\"rewire\":[{\"transition\",\"to\"}],\"rationale\"}\n"
    "- MODIFY_TRANSITION: {\"op\":\"MODIFY_TRANSITION\",\"transition\",\"to\"?,\"priority\"?,\"condition\"?,\"rationale\"}\n"
    "- REVISE_INSTRUCTION: {\"op\":\"REVISE_INSTRUCTION\",\"state_id\",\"instruction\" or \"append\",\"rationale\"}\n"
    "A transition is {\"id\",\"from\",\"to\",\"priority\",\"condition\":{\"kind\":\"always\"|\"predicate\"|\"router\",...}}.\n"
    "Reply with one ```json fenced array of 1 to 3 operations. Free-form rewrites are rejected.";

std::string proposer_prompt(const Verdict& verdict, const FsmConfig& config, const Trajectory& trajectory,
                            const std::vector<ExperienceRecord>& retrieved, std::string_view feedback) {
    std::ostringstream out;
    out << "QUERY: " << trajectory.query << "\n\n";
    out << "FAILURE MODES:\n";
    for (const auto& f : verdict.failure_modes) out << "- " << to_string(f.code) << ": " << f.detail << "\n";
    if (!verdict.rationale.empty()) out << "CRITIC RATIONALE: " << verdict.rationale << "\n";
    out << "\nCURRENT MACHINE:\n" << render_config_compact(config) << "\n";
    out << "TRAJECTORY DIGEST:\n" << evidence_digest(trajectory) << "\n";
    if (!retrieved.empty()) {
        out << "PRIOR EXPERIENCE:\n";
        for (const auto& r : retrieved) {
            out << "- [" << to_string(r.outcome) << "] " << text::truncate_utf8(r.query_text, 120) << ": "
                << text::truncate_utf8(text::collapse_whitespace(r.rationale), 300) << "\n";
        }
    }
    bool warned = false;
    for (const auto& p : config.negative_constraints) {
        if (!warned) out << "WARNINGS (remembered failure paths):\n";
        warned = true;
        if (p.kind == PatternKind::TransitionEdge) {
            out << "- do not route " << p.first << " -> " << p.second;
        } else {
            out << "- do not use tool " << p.second << " in " << p.first;
        }
        out << (p.rationale.empty() ? "" : ": " + p.rationale) << "\n";
    }
    if (!feedback.empty()) out << "\nPREVIOUS PROPOSAL REJECTED:\n" << feedback << "\n";
    return out.str();
}

}  // namespace

std::vector<AtomicOp> parse_proposal(std::string_view reply, const FsmConfig& config, std::vector<std::string>* warnings) {
    auto warn = [&](const std::string& msg) {
        spdlog::warn("proposal: {}", msg);
        if (warnings) warnings->push_back(msg);
    };
    const auto fence = reply.find("```json");
    if (fence == std::string_view::npos) throw NoValidProposal("proposer reply has no ```json block");
    const auto start = fence + 7;
    const auto end = reply.find("```", start);
    if (end == std::string_view::npos) throw NoValidProposal("unterminated ```json block");

    const auto doc = Json::parse(text::trim(reply.substr(start, end - start)), nullptr, false);
    if (doc.is_discarded()) throw NoValidProposal("proposal block is not valid JSON");
    if (!doc.is_array()) throw NoValidProposal("proposal block is not a JSON array");

    std::vector<AtomicOp> ops;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        Json item = doc[i];
        const auto path = "$[" + std::to_string(i) + "]";
        if (item.is_object() && item.value("op", "") == "REVISE_INSTRUCTION" && item.contains("append") &&
            !item.contains("instruction")) {
            const auto* state = item["state_id"].is_string() ? config.find_state(item["state_id"].get<std::string>()) : nullptr;
            if (!state || !item["append"].is_string()) {
                warn(path + ": append targets an unknown state");
                continue;
            }
            const auto addition = item["append"].get<std::string>();
            item["instruction"] = state->instruction.empty() ? addition : state->instruction + "\n" + addition;
            item.erase("append");
        }
        try {
            ops.push_back(op_from_json(item, path));
        } catch (const SchemaError& e) {
            warn(std::string("dropped op: ") + e.what());
        }
    }
    if (ops.size() > kMaxOpsPerProposal) {
        warn("keeping the first " + std::to_string(kMaxOpsPerProposal) + " of " + std::to_string(ops.size()) + " ops");
        ops.resize(kMaxOpsPerProposal);
    }
    if (ops.empty()) throw NoValidProposal("no operation in the proposal survived validation");
    return ops;
}

std::vector<AtomicOp> propose_ops(const Verdict& verdict, const FsmConfig& config, const Trajectory& trajectory,
                                  const std::vector<ExperienceRecord>& retrieved, ChatBackend& proposer,
                                  std::string_view feedback) {
    if (verdict.passed) throw Error("propose_ops called for a passing verdict");
    ChatRequest request;
    request.role_label = "proposer";
    request.messages = {{"system", std::string(kProposerSystem)},
                        {"user", proposer_prompt(verdict, config, trajectory, retrieved, feedback)}};
    return parse_proposal(proposer.chat(request).text, config);
}

FsmConfig apply_freeform_rewrite(const FsmConfig& config, const Verdict& verdict, ChatBackend& rewriter) {
    std::ostringstream prompt;
    prompt << "FAILURE MODES:\n";
    for (const auto& f : verdict.failure_modes) prompt << "- " << to_string(f.code) << ": " << f.detail << "\n";
    prompt << "\nCURRENT INSTRUCTIONS:\n";
    for (const auto& s : config.states) prompt << "[" << s.id << "]\n" << s.instruction << "\n";
    prompt << "\nRewrite the instructions of ALL states. Reply with a ```json fenced object mapping state id to "
              "the new instruction text.\n";

    ChatRequest request;
    request.role_label = "rewriter";
    request.messages = {{"system", "You improve the prompts of a research workflow."}, {"user", prompt.str()}};
    const auto reply = rewriter.chat(request).text;

    std::string_view body = reply;
    if (const auto fence = body.find("```json"); fence != std::string_view::npos) {
        const auto end = body.find("```", fence + 7);
        body = body.substr(fence + 7, end == std::string_view::npos ? std::string_view::npos : end - fence - 7);
    }
    const auto doc = Json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw BackendFailure("rewrite reply is not a JSON object");

    FsmConfig next = config;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        auto* s = next.find_state(it.key());
        if (!s) {
            spdlog::warn("rewrite names unknown state '{}'", it.key());
            continue;
        }
        if (!it.value().is_string()) throw BackendFailure("rewrite for '" + it.key() + "' is not text");
        s->instruction = it.value().get<std::string>();
    }
    next.version = config.version + 1;
    return next;
}

EvolutionOutcome evolve(const FsmConfig& initial_config, std::string_view query, const Backends& backends,
                        const EvolutionLimits& limits, const std::vector<ExperienceRecord>& retrieved,
                        EvolutionMode mode) {
    EvolutionOutcome outcome;
    FsmConfig config = initial_config;
    const int rounds = std::max(1, limits.max_iterations);
    const ApplyOptions apply_options{limits.max_states, true};

    auto apply_all = [&](const std::vector<AtomicOp>& ops, int iteration, std::vector<std::string>& rejections) {
        int applied = 0;
        for (const auto& op : ops) {
            try {
                auto result = apply_op(config, op, apply_options);
                outcome.op_log.push_back({iteration, op, result.inverse, config.version, result.config.version});
                config = std::move(result.config);
                ++applied;
            } catch (const OpRejected& e) {
                spdlog::info("iteration {}: {} rejected ({})", iteration, op.label(), e.what());
                rejections.push_back(op.label() + " rejected: " + e.what());
            }
        }
        return applied;
    };

    for (int t = 1; t <= rounds; ++t) {
        IterationRecord rec;
        rec.iteration = t;
        rec.config = config;
        rec.trajectory = run(config, query, backends, limits.run, &rec.tool_log);
        rec.verdict = critique(query, rec.trajectory, backends.for_role("critic"));
        outcome.verdicts.push_back(rec.verdict);
        const bool passed = rec.verdict.passed;
        const Verdict verdict = rec.verdict;
        const Trajectory trajectory = rec.trajectory;
        outcome.iterations.push_back(std::move(rec));

        if (passed) {
            outcome.succeeded = true;
            outcome.stop_reason = "critic passed";
            break;
        }
        if (t >= limits.max_iterations) {
            outcome.stop_reason = "iteration cap reached";
            break;
        }

        auto& rejections = outcome.iterations.back().rejections;
        try {
            int applied = 0;
            if (mode == EvolutionMode::Rewrite) {
                config = apply_freeform_rewrite(config, verdict, backends.for_role("rewriter"));
                applied = 1;
            } else {
                const auto ops = propose_ops(verdict, config, trajectory, retrieved, backends.for_role("proposer"));
                applied = apply_all(ops, t, rejections);
                if (applied == 0 && limits.retry_on_rejection) {
                    std::string feedback;
                    for (const auto& r : rejections) feedback += "- " + r + "\n";
                    const auto retry = propose_ops(verdict, config, trajectory, retrieved,
                                                   backends.for_role("proposer"), feedback);
                    applied = apply_all(retry, t, rejections);
                }
            }
            if (applied == 0) spdlog::info("iteration {}: no op applied; rerunning unchanged machine", t);
        } catch (const NoValidProposal& e) {
            spdlog::warn("iteration {}: {}", t, e.what());
            outcome.stop_reason = std::string("no valid proposal: ") + e.what();
            break;
        }
    }

    outcome.iterations_used = limits.max_iterations <= 0 ? 0 : static_cast<int>(outcome.iterations.size());
    const IterationRecord* best = &outcome.iterations.back();
    for (const auto& rec : outcome.iterations) {
        if (rec.verdict.passed) {
            best = &rec;
            break;
        }
    }
    outcome.final_config = best->config;
    outcome.final_trajectory = best->trajectory;
    outcome.final_tool_log = best->tool_log;
    return outcome;
}

}  // namespace evofsm
