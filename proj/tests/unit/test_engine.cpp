#include <gtest/gtest.h>

#include "evofsm/critic.hpp"
#include "evofsm/engine.hpp"
#include "evofsm/scenarios.hpp"

using namespace evofsm;

namespace {

ScriptRule reply_rule(std::string role, std::vector<std::string> contains, std::string reply) {
    ScriptRule r;
    r.role = std::move(role);
    r.contains = std::move(contains);
    r.reply = std::move(reply);
    return r;
}

StepRecord step(std::string state, std::string output, int evidence = 0) {
    StepRecord s;
    s.state_id = std::move(state);
    s.agent_output = std::move(output);
    for (int i = 0; i < evidence; ++i) s.tool_calls.push_back({"search", "q", "h", "preview", false, false, ""});
    return s;
}

Trajectory with_steps(std::vector<StepRecord> steps) {
    Trajectory t;
    t.query = "q";
    for (auto& s : steps) {
        s.index = t.steps.size();
        t.visit_counts[s.state_id] += 1;
        t.steps.push_back(std::move(s));
    }
    return t;
}

FsmConfig judged_config() {
    auto c = scenarios::default_research_config();
    c.find_transition("t_browsing_analysis")->condition = ConditionSpec::judged("the page answers the query");
    return c;
}

}  // namespace

TEST(Predicates, EvaluateAgainstTheTrajectory) {
    const auto t = with_steps({step("Search", "hits", 2), step("Browsing", "FOUND: x")});
    EXPECT_TRUE(evaluate_predicate(ConditionSpec::when("evidence_count_at_least", Json::array({2})), "Browsing", t));
    EXPECT_FALSE(evaluate_predicate(ConditionSpec::when("evidence_count_at_least", Json::array({3})), "Browsing", t));
    EXPECT_TRUE(evaluate_predicate(ConditionSpec::when("last_output_contains", Json::array({"FOUND:"})), "Browsing", t));
    EXPECT_TRUE(evaluate_predicate(ConditionSpec::when("steps_exceeded", Json::array({1})), "Browsing", t));
    EXPECT_FALSE(evaluate_predicate(ConditionSpec::when("steps_exceeded", Json::array({2})), "Browsing", t));
    EXPECT_FALSE(evaluate_predicate(ConditionSpec::when("visit_count_exceeded", Json::array({1})), "Browsing", t));
    EXPECT_TRUE(evaluate_predicate(ConditionSpec::when("visit_count_exceeded", Json::array({"Search", 0})), "Browsing", t));
}

TEST(Route, PriorityOrderWithPredicateFallback) {
    const auto c = scenarios::default_research_config();
    ScriptedChat router({});
    EXPECT_EQ(route(c, "Browsing", with_steps({step("Browsing", "FOUND: it")}), router), "Analysis");
    EXPECT_EQ(route(c, "Browsing", with_steps({step("Browsing", "MISSING: it")}), router), "Search");
    EXPECT_EQ(route(c, "Search", with_steps({step("Search", "none")}), router), "Analysis");
    EXPECT_EQ(route(c, "Search", with_steps({step("Search", "hits", 1)}), router), "Browsing");
}

TEST(Route, ForbiddenEdgesAreSkipped) {
    auto c = scenarios::default_research_config();
    c.negative_constraints.push_back({PatternKind::TransitionEdge, "Browsing", "Search", "loop"});
    ScriptedChat router({});
    EXPECT_THROW(route(c, "Browsing", with_steps({step("Browsing", "MISSING")}), router), NoTransitionFired);
}

TEST(Route, RouterJudgedUsesOneCallAndNoneFallsThrough) {
    const auto c = judged_config();
    ScriptedChat yes({reply_rule("router", {}, "t_browsing_analysis")});
    EXPECT_EQ(route(c, "Browsing", with_steps({step("Browsing", "page")}), yes), "Analysis");
    ScriptedChat none({reply_rule("router", {}, "NONE")});
    EXPECT_EQ(route(c, "Browsing", with_steps({step("Browsing", "page")}), none), "Search");
}

TEST(Run, StaticCase1HaltsInALoop) {
    const auto world = scenarios::case1();
    const auto backends = scenarios::make_backends(world);
    ToolLog log;
    const auto t = run(world.default_config, world.items.front().query, backends, {}, &log);
    EXPECT_EQ(t.halted_reason, HaltReason::LoopDetected);
    EXPECT_FALSE(t.final_answer.has_value());
    EXPECT_EQ(t.visit_counts.at("Search"), 4);
    EXPECT_FALSE(log.entries.empty());
    for (const auto& s : t.steps)
        for (const auto& call : s.tool_calls) EXPECT_LE(call.output_preview.size(), kPreviewChars);
}

TEST(Run, StepCapHalts) {
    const auto world = scenarios::case1();
    RunLimits limits;
    limits.max_steps = 2;
    const auto t = run(world.default_config, world.items.front().query, scenarios::make_backends(world), limits);
    EXPECT_EQ(t.halted_reason, HaltReason::StepCap);
    EXPECT_EQ(t.steps.size(), 2u);
}

TEST(Run, DisallowedToolsAreRefusedNotExecuted) {
    auto c = scenarios::default_research_config();
    c.find_state("Search")->allowed_tools.clear();
    const auto world = scenarios::case1();
    const auto backends = scenarios::make_backends(world);
    Trajectory t;
    t.query = world.items.front().query;
    ToolLog log;
    const auto s = execute_state(c, "Search", t, backends.for_role("agent"), backends.tools, log);
    ASSERT_EQ(s.tool_calls.size(), 1u);
    EXPECT_TRUE(s.tool_calls[0].refused);
    EXPECT_TRUE(log.entries.empty());
}

TEST(Run, TrajectoryJsonRoundTrips) {
    const auto world = scenarios::case1();
    const auto t = run(world.default_config, world.items.front().query, scenarios::make_backends(world));
    EXPECT_EQ(trajectory_from_json(to_json(t)), t);
}

TEST(Critic, MechanicalFailuresSkipTheBackend) {
    ScriptedChat critic({});  // any call would raise ScriptMiss
    auto t = with_steps({step("Search", "x"), step("Search", "x")});
    t.halted_reason = HaltReason::LoopDetected;
    const auto v = critique("q", t, critic);
    EXPECT_FALSE(v.passed);
    EXPECT_TRUE(v.has(FailureCode::Loop));
    EXPECT_TRUE(v.mechanical_flags.contains(MechanicalFlag::LoopDetected));
}

TEST(Critic, ParsesJsonAndLineProtocol) {
    const auto a = parse_critic_reply(R"({"passed": false, "failure_modes": [{"code": "QUANT_EVIDENCE_MISSING", "detail": "no unit"}], "rationale": "r"})");
    EXPECT_FALSE(a.passed);
    EXPECT_TRUE(a.has(FailureCode::QuantEvidenceMissing));
    const auto b = parse_critic_reply("FAIL\n- SOURCE_QUALITY: blog only\n");
    EXPECT_TRUE(b.has(FailureCode::SourceQuality));
    EXPECT_TRUE(parse_critic_reply("PASS\nlooks fine").passed);
    EXPECT_THROW(parse_critic_reply("maybe?"), Error);
}

TEST(Critic, UnparseableReplyFailsSafe) {
    ScriptedChat critic({reply_rule("critic", {}, "I am not sure.")});
    auto t = with_steps({step("Analysis", "42 units")});
    t.final_answer = "42 units";
    t.halted_reason = HaltReason::Terminal;
    const auto v = critique("q", t, critic);
    EXPECT_FALSE(v.passed);
    EXPECT_TRUE(v.has(FailureCode::IncompleteReasoning));
}

TEST(Critic, NeverSeesAGoldAnswer) {
    std::string seen;
    struct Capture : ChatBackend {
        std::string* out;
        explicit Capture(std::string* o) : out(o) {}
        ChatReply chat(const ChatRequest& r) override {
            *out = render_transcript(r);
            return make_reply("PASS");
        }
    } critic(&seen);
    auto t = with_steps({step("Analysis", "answer")});
    t.final_answer = "answer";
    t.halted_reason = HaltReason::Terminal;
    critique("the query", t, critic);
    EXPECT_NE(seen.find("QUERY: the query"), std::string::npos);
    EXPECT_EQ(seen.find("GOLD"), std::string::npos);
}
