#include <gtest/gtest.h>

#include "evofsm/evolution.hpp"
#include "evofsm/reflection.hpp"
#include "evofsm/scenarios.hpp"

using namespace evofsm;

namespace {

Trajectory visits(const std::vector<std::string>& states) {
    Trajectory t;
    for (const auto& s : states) {
        StepRecord r;
        r.index = t.steps.size();
        r.state_id = s;
        t.steps.push_back(r);
        t.visit_counts[s] += 1;
    }
    return t;
}

/// Oracle: edges (a, b) where b already occurred at or before a's first visit.
std::vector<std::pair<std::string, std::string>> back_edges_oracle(const std::vector<std::string>& seq) {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        const auto first_a = std::find(seq.begin(), seq.end(), seq[i]) - seq.begin();
        const auto first_b = std::find(seq.begin(), seq.end(), seq[i + 1]) - seq.begin();
        std::pair<std::string, std::string> e{seq[i], seq[i + 1]};
        if (first_b <= first_a && std::find(out.begin(), out.end(), e) == out.end()) out.push_back(e);
    }
    return out;
}

}  // namespace

TEST(Proposal, ParsesFencedArrayAndResolvesAppend) {
    const auto cfg = scenarios::default_research_config();
    const std::string reply = "Plan:\n```json\n[" + scenarios::precision_op_json().dump() + "]\n```\n";
    const auto ops = parse_proposal(reply, cfg);
    ASSERT_EQ(ops.size(), 1u);
    const auto& p = std::get<ReviseInstructionPayload>(ops[0].payload);
    EXPECT_EQ(p.instruction, cfg.find_state("Browsing")->instruction + "\n" + scenarios::kPrecisionClause);
}

TEST(Proposal, DropsInvalidEntriesAndCapsAtThree) {
    const auto cfg = scenarios::default_research_config();
    Json arr = Json::array({Json{{"op", "NOPE"}}});
    for (int i = 0; i < 5; ++i) arr.push_back(scenarios::precision_op_json());
    std::vector<std::string> warnings;
    const auto ops = parse_proposal("```json\n" + arr.dump() + "\n```", cfg, &warnings);
    EXPECT_EQ(ops.size(), kMaxOpsPerProposal);
    EXPECT_FALSE(warnings.empty());
    EXPECT_THROW(parse_proposal("no json here", cfg), NoValidProposal);
    EXPECT_THROW(parse_proposal("```json\n{\"op\": 1}\n```", cfg), NoValidProposal);
}

TEST(Evolve, Case1AddsVerifierThenPasses) {
    const auto world = scenarios::case1();
    const auto out = evolve(world.default_config, world.items.front().query, scenarios::make_backends(world));
    ASSERT_EQ(out.verdicts.size(), 2u);
    EXPECT_FALSE(out.verdicts[0].passed);
    EXPECT_TRUE(out.verdicts[1].passed);
    ASSERT_EQ(out.op_log.size(), 1u);
    EXPECT_EQ(out.op_log[0].iteration, 1);
    EXPECT_EQ(out.op_log[0].post_version, out.op_log[0].pre_version + 1);
    EXPECT_NE(out.final_config.find_state("Verifier"), nullptr);
    EXPECT_EQ(out.final_trajectory.final_answer, world.items.front().gold);
}

TEST(Evolve, CapZeroRunsOnceWithoutOps) {
    const auto world = scenarios::case1();
    EvolutionLimits limits;
    limits.max_iterations = 0;
    const auto out = evolve(world.default_config, world.items.front().query, scenarios::make_backends(world), limits);
    EXPECT_EQ(out.iterations_used, 0);
    EXPECT_EQ(out.verdicts.size(), 1u);
    EXPECT_TRUE(out.op_log.empty());
    EXPECT_EQ(out.final_trajectory.halted_reason, HaltReason::LoopDetected);
}

TEST(Evolve, RewriteModeFreezesTopology) {
    const auto world = scenarios::case1();
    const auto out = evolve(world.default_config, world.items.front().query, scenarios::make_backends(world), {}, {},
                            EvolutionMode::Rewrite);
    EXPECT_TRUE(out.op_log.empty());
    EXPECT_EQ(topology_projection(out.final_config), topology_projection(world.default_config));
    EXPECT_FALSE(out.succeeded);
}

TEST(Reflection, LoopClosingEdgesMatchOracle) {
    const std::vector<std::vector<std::string>> cases = {
        {"Search", "Browsing", "Search", "Browsing", "Search", "Browsing", "Search"},
        {"A", "B", "C", "B", "C", "A", "D"},
        {"A", "A", "B"},
        {"A", "B", "C"},
    };
    for (const auto& seq : cases) EXPECT_EQ(loop_closing_edges(visits(seq)), back_edges_oracle(seq));
    const auto edges = loop_closing_edges(visits(cases[0]));
    ASSERT_EQ(edges.size(), 1u);
    EXPECT_EQ(edges[0], (std::pair<std::string, std::string>{"Browsing", "Search"}));
}

TEST(Reflection, FailedLoopingEpisodeYieldsConstraints) {
    const auto world = scenarios::case1();
    const auto backends = scenarios::make_backends(world);
    EvolutionLimits limits;
    limits.max_iterations = 0;
    const auto out = evolve(world.default_config, world.items.front().query, backends, limits);
    const auto rec = reflect(out, world.items.front().query, *backends.embedder, backends.for_role("reflector"));
    EXPECT_EQ(rec.outcome, Outcome::Failure);
    ASSERT_EQ(rec.failure_constraints.size(), 1u);
    EXPECT_EQ(rec.failure_constraints[0].first, "Browsing");
    EXPECT_EQ(rec.failure_constraints[0].second, "Search");
    EXPECT_EQ(rec.query_embedding.size(), backends.embedder->dimension());
}

TEST(Reflection, SuccessKeepsConfigAndOps) {
    const auto world = scenarios::case1();
    const auto backends = scenarios::make_backends(world);
    const auto out = evolve(world.default_config, world.items.front().query, backends);
    const auto rec = reflect(out, world.items.front().query, *backends.embedder, backends.for_role("reflector"));
    EXPECT_EQ(rec.outcome, Outcome::Success);
    EXPECT_TRUE(rec.failure_constraints.empty());
    ASSERT_EQ(rec.op_sequence.size(), 1u);
    EXPECT_EQ(rec.op_sequence[0].label(), "ADD_STATE(Verifier)");
    EXPECT_NE(rec.config_snapshot.find_state("Verifier"), nullptr);
    EXPECT_NE(rec.rationale, kReflectionUnavailable);
}

TEST(Reflection, BackendFailureGivesPlaceholderRationale) {
    const auto world = scenarios::case1();
    const auto backends = scenarios::make_backends(world);
    const auto out = evolve(world.default_config, world.items.front().query, backends);
    ScriptedChat empty({});
    const auto rec = reflect(out, world.items.front().query, *backends.embedder, empty);
    EXPECT_EQ(rec.rationale, kReflectionUnavailable);
}
