#include "evofsm/reflection.hpp"

#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "evofsm/memory.hpp"
#include "evofsm/text.hpp"

namespace evofsm {

std::vector<std::pair<std::string, std::string>> loop_closing_edges(const Trajectory& trajectory) {
    const auto seq = trajectory.state_sequence();
    std::map<std::string, std::size_t> first_visit;
    for (std::size_t i = 0; i < seq.size(); ++i) first_visit.emplace(seq[i], i);
    std::vector<std::pair<std::string, std::string>> edges;
    std::set<std::pair<std::string, std::string>> emitted;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        if (first_visit[seq[i + 1]] > first_visit[seq[i]]) continue;
        std::pair<std::string, std::string> e{seq[i], seq[i + 1]};
        if (emitted.insert(e).second) edges.push_back(std::move(e));
    }
    return edges;
}

namespace {

std::string reflection_prompt(const EvolutionOutcome& episode, std::string_view query) {
    std::ostringstream out;
    out << "QUERY: " << query << "\n";
    out << "OUTCOME: " << (episode.succeeded ? "SUCCESS" : "FAILURE") << "\n";
    out << "ITERATIONS: " << episode.iterations_used << "\n";
    out << "OPERATIONS:\n";
    if (episode.op_log.empty()) out << "(none)\n";
    for (const auto& e : episode.op_log) {
        out << "- t" << e.iteration << " " << e.op.label();
        if (!e.op.rationale.empty()) out << ": " << e.op.rationale;
        out << "\n";
    }
    out << "VERDICTS:\n";
    for (std::size_t i = 0; i < episode.verdicts.size(); ++i) {
        const auto& v = episode.verdicts[i];
        out << "- " << (i + 1) << ": " << (v.passed ? "PASS" : "FAIL");
        for (const auto& f : v.failure_modes) out << " " << to_string(f.code);
        out << "\n";
    }
    out << "FINAL TRAJECTORY:\n" << evidence_digest(episode.final_trajectory) << "\n";
    out << "Summarize in a few sentences which workflow change made the difference, or which path failed.\n";
    return out.str();
}

}  // namespace

ExperienceRecord reflect(const EvolutionOutcome& episode, std::string_view query, Embedder& embedder,
                         ChatBackend& reflector) {
    ExperienceRecord r;
    r.query_text = std::string(query);
    r.query_embedding = embed(query, embedder);
    r.outcome = episode.succeeded ? Outcome::Success : Outcome::Failure;
    r.config_snapshot = episode.final_config;
    for (const auto& e : episode.op_log) r.op_sequence.push_back(e.op);

    if (!episode.succeeded && episode.final_trajectory.halted_reason == HaltReason::LoopDetected) {
        for (const auto& [from, to] : loop_closing_edges(episode.final_trajectory)) {
            r.failure_constraints.push_back(
                {PatternKind::TransitionEdge, from, to, "closed a loop in a failed run: " + text::truncate_utf8(query, 80)});
        }
    }

    ChatRequest request;
    request.role_label = "reflector";
    request.messages = {{"system", "You distill finished research episodes into reusable strategy notes."},
                        {"user", reflection_prompt(episode, query)}};
    try {
        r.rationale = text::trim(reflector.chat(request).text);
        if (r.rationale.empty()) r.rationale = std::string(kReflectionUnavailable);
    } catch (const BackendFailure& e) {
        spdlog::warn("reflection failed: {}", e.what());
        r.rationale = std::string(kReflectionUnavailable);
    }
    return r;
}

}  // namespace evofsm
