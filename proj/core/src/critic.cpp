#include "evofsm/critic.hpp"

#include <algorithm>
#include <sstream>

#include <spdlog/spdlog.h>

#include "evofsm/text.hpp"
#include "json_util.hpp"

namespace evofsm {

using namespace detail;

std::string_view to_string(FailureCode code) {
    switch (code) {
        case FailureCode::QuantEvidenceMissing: return "QUANT_EVIDENCE_MISSING";
        case FailureCode::LogicalInconsistency: return "LOGICAL_INCONSISTENCY";
        case FailureCode::Hallucination: return "HALLUCINATION";
        case FailureCode::IncompleteReasoning: return "INCOMPLETE_REASONING";
        case FailureCode::Loop: return "LOOP";
        case FailureCode::SourceQuality: return "SOURCE_QUALITY";
    }
    return "INCOMPLETE_REASONING";
}

bool failure_code_from_string(std::string_view name, FailureCode& out) {
    for (auto code : {FailureCode::QuantEvidenceMissing, FailureCode::LogicalInconsistency,
                      FailureCode::Hallucination, FailureCode::IncompleteReasoning, FailureCode::Loop,
                      FailureCode::SourceQuality}) {
        if (to_string(code) == name) {
            out = code;
            return true;
        }
    }
    out = FailureCode::IncompleteReasoning;
    return false;
}

std::string_view to_string(MechanicalFlag flag) {
    switch (flag) {
        case MechanicalFlag::LoopDetected: return "LOOP_DETECTED";
        case MechanicalFlag::StepCap: return "STEP_CAP";
        case MechanicalFlag::EmptyAnswer: return "EMPTY_ANSWER";
    }
    return "EMPTY_ANSWER";
}

bool Verdict::has(FailureCode code) const {
    return std::any_of(failure_modes.begin(), failure_modes.end(), [code](const auto& t) { return t.code == code; });
}

Json to_json(const Verdict& v) {
    Json modes = Json::array();
    for (const auto& t : v.failure_modes) modes.push_back({{"code", to_string(t.code)}, {"detail", t.detail}});
    Json flags = Json::array();
    for (auto f : v.mechanical_flags) flags.push_back(to_string(f));
    return {{"passed", v.passed}, {"failure_modes", modes}, {"rationale", v.rationale}, {"mechanical_flags", flags}};
}

Verdict verdict_from_json(const Json& j, const std::string& path) {
    require_object(j, path);
    Verdict v;
    v.passed = as_bool(require_field(j, "passed", path), child(path, "passed"));
    if (auto it = j.find("failure_modes"); it != j.end()) {
        const auto p = child(path, "failure_modes");
        require_array(*it, p);
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto ep = index(p, i);
            const auto& e = require_object((*it)[i], ep);
            FailureTag tag;
            const auto code = req_string(e, "code", ep);
            if (!failure_code_from_string(code, tag.code)) throw SchemaError(child(ep, "code"), "unknown failure code");
            tag.detail = opt_string(e, "detail", ep);
            v.failure_modes.push_back(std::move(tag));
        }
    }
    v.rationale = opt_string(j, "rationale", path);
    for (const auto& f : opt_string_list(j, "mechanical_flags", path)) {
        if (f == "LOOP_DETECTED") v.mechanical_flags.insert(MechanicalFlag::LoopDetected);
        else if (f == "STEP_CAP") v.mechanical_flags.insert(MechanicalFlag::StepCap);
        else if (f == "EMPTY_ANSWER") v.mechanical_flags.insert(MechanicalFlag::EmptyAnswer);
        else throw SchemaError(child(path, "mechanical_flags"), "unknown flag '" + f + "'");
    }
    return v;
}

namespace {

FailureTag make_tag(std::string_view code, std::string detail) {
    FailureTag tag;
    if (!failure_code_from_string(code, tag.code)) {
        detail = std::string(code) + (detail.empty() ? "" : ": " + detail);
    }
    tag.detail = std::move(detail);
    return tag;
}

std::optional<Json> find_json_object(std::string_view reply) {
    if (const auto fence = reply.find("```json"); fence != std::string_view::npos) {
        const auto start = fence + 7;
        const auto end = reply.find("```", start);
        if (end != std::string_view::npos) {
            auto j = Json::parse(reply.substr(start, end - start), nullptr, false);
            if (!j.is_discarded() && j.is_object()) return j;
        }
    }
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
    auto j = Json::parse(reply.substr(open, close - open + 1), nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
}

}  // namespace

Verdict parse_critic_reply(std::string_view reply) {
    Verdict v;
    if (auto j = find_json_object(reply); j && j->contains("passed") && (*j)["passed"].is_boolean()) {
        v.passed = (*j)["passed"].get<bool>();
        if (auto it = j->find("failure_modes"); it != j->end() && it->is_array()) {
            for (const auto& e : *it) {
                if (e.is_string()) {
                    v.failure_modes.push_back(make_tag(e.get<std::string>(), ""));
                } else if (e.is_object() && e.contains("code") && e["code"].is_string()) {
                    v.failure_modes.push_back(make_tag(e["code"].get<std::string>(), e.value("detail", "")));
                }
            }
        }
        v.rationale = j->value("rationale", "");
    } else {
        std::istringstream lines{std::string(reply)};
        std::string line;
        bool header_seen = false;
        std::string rationale;
        while (std::getline(lines, line)) {
            auto t = text::trim(line);
            if (t.empty()) continue;
            if (!header_seen) {
                if (t.rfind("PASS", 0) == 0) {
                    v.passed = true;
                } else if (t.rfind("FAIL", 0) == 0) {
                    v.passed = false;
                } else {
                    throw Error("critic reply has no verdict");
                }
                header_seen = true;
                continue;
            }
            if (t.rfind("- ", 0) == 0) {
                auto body = t.substr(2);
                const auto colon = body.find(':');
                const auto code = text::trim(body.substr(0, colon));
                const auto detail = colon == std::string::npos ? std::string() : text::trim(body.substr(colon + 1));
                v.failure_modes.push_back(make_tag(code, detail));
            } else {
                rationale += (rationale.empty() ? "" : "\n") + t;
            }
        }
        if (!header_seen) throw Error("critic reply is empty");
        v.rationale = rationale;
    }
    // A verdict that names failure modes is a failure whatever it claims.
    if (!v.failure_modes.empty()) v.passed = false;
    if (!v.passed && v.failure_modes.empty())
        v.failure_modes.push_back({FailureCode::IncompleteReasoning, "critic rejected the answer without a tag"});
    return v;
}

Verdict critique(std::string_view query, const Trajectory& trajectory, ChatBackend& critic) {
    Verdict v;
    const bool answered = trajectory.final_answer && !text::trim(*trajectory.final_answer).empty();
    if (trajectory.halted_reason == HaltReason::LoopDetected) {
        v.mechanical_flags.insert(MechanicalFlag::LoopDetected);
        std::string detail = "run halted in a loop";
        int worst = 0;
        for (const auto& [state, count] : trajectory.visit_counts) {
            if (count > worst) {
                worst = count;
                detail = "state '" + state + "' visited " + std::to_string(count) + " times without progress";
            }
        }
        v.failure_modes.push_back({FailureCode::Loop, detail});
    }
    if (trajectory.halted_reason == HaltReason::StepCap) {
        v.mechanical_flags.insert(MechanicalFlag::StepCap);
        v.failure_modes.push_back({FailureCode::IncompleteReasoning, "step budget exhausted"});
    }
    if (!answered) {
        v.mechanical_flags.insert(MechanicalFlag::EmptyAnswer);
        if (v.failure_modes.empty()) {
            v.failure_modes.push_back({FailureCode::IncompleteReasoning,
                                       trajectory.error.empty() ? "no final answer" : "no final answer: " + trajectory.error});
        }
    }
    if (!v.mechanical_flags.empty()) {
        v.passed = false;
        v.rationale = "mechanical failure: halted with " + std::string(to_string(trajectory.halted_reason));
        return v;
    }

    std::ostringstream prompt;
    prompt << "QUERY: " << query << "\n\n";
    prompt << "FINAL ANSWER: " << *trajectory.final_answer << "\n\n";
    prompt << "EVIDENCE DIGEST:\n" << evidence_digest(trajectory) << "\n";
    prompt << "Judge whether the final answer fully satisfies the query. Reply with JSON "
              "{\"passed\": bool, \"failure_modes\": [{\"code\": CODE, \"detail\": text}], \"rationale\": text} "
              "where CODE is one of QUANT_EVIDENCE_MISSING, LOGICAL_INCONSISTENCY, HALLUCINATION, "
              "INCOMPLETE_REASONING, LOOP, SOURCE_QUALITY.\n";

    ChatRequest request;
    request.role_label = "critic";
    request.messages = {{"system", "You are the critic of a research agent. You do not know the correct answer."},
                        {"user", prompt.str()}};
    const auto reply = critic.chat(request);
    try {
        return parse_critic_reply(reply.text);
    } catch (const Error& e) {
        spdlog::warn("critic reply unparseable ({}); failing safe", e.what());
        Verdict fail;
        fail.passed = false;
        fail.failure_modes.push_back({FailureCode::IncompleteReasoning, "critic reply could not be parsed"});
        fail.rationale = reply.text;
        return fail;
    }
}

}  // namespace evofsm
