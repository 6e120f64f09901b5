#include <gtest/gtest.h>

#include "evofsm/fsm.hpp"
#include "evofsm/scenarios.hpp"
#include "evofsm/text.hpp"
#include "support/generators.hpp"

using namespace evofsm;

namespace {

FsmConfig two_state() {
    FsmConfig c;
    c.initial_state = "A";
    c.states = {{"A", "A", "do a", {}, false, Json::object()}, {"B", "B", "do b", {}, true, Json::object()}};
    c.transitions = {{"t1", "A", "B", ConditionSpec::always(), 0, Json::object()}};
    return c;
}

}  // namespace

TEST(Text, Fnv1aMatchesPublishedVectors) {
    EXPECT_EQ(text::fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(text::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(text::fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Text, NormalizeAnswerStripsArticlesPunctuationAndCase) {
    EXPECT_EQ(text::normalize_answer("The  80.3 TWh."), "80 3 twh");
    EXPECT_EQ(text::normalize_answer("An Apple, a day"), "apple day");
}

TEST(Text, TruncateKeepsUtf8Boundaries) {
    const std::string s = "ab\xc3\xa9";  // "abé"
    EXPECT_EQ(text::truncate_utf8(s, 3), "ab");
    EXPECT_EQ(text::truncate_utf8(s, 4), s);
}

TEST(Validate, DefaultResearchConfigIsValid) {
    EXPECT_TRUE(validate_config(scenarios::default_research_config()).ok());
}

TEST(Validate, ReportsEachViolationCode) {
    auto c = two_state();
    c.transitions.push_back({"t2", "A", "Z", ConditionSpec::always(), 1, Json::object()});
    EXPECT_TRUE(validate_config(c).has(ViolationCode::DanglingTransition));

    c = two_state();
    c.transitions.push_back({"t2", "A", "B", ConditionSpec::always(), 0, Json::object()});
    EXPECT_TRUE(validate_config(c).has(ViolationCode::DupPriority));

    c = two_state();
    c.states.push_back({"C", "C", "orphan", {}, true, Json::object()});
    EXPECT_TRUE(validate_config(c).has(ViolationCode::UnreachableState));

    c = two_state();
    c.states[1].is_terminal = false;
    const auto r = validate_config(c);
    EXPECT_TRUE(r.has(ViolationCode::NontermDeadEnd));
    EXPECT_TRUE(r.has(ViolationCode::NoTerminalReachable));

    c = two_state();
    c.initial_state = "Q";
    EXPECT_TRUE(validate_config(c).has(ViolationCode::NoInitial));

    c = two_state();
    c.transitions[0].condition = ConditionSpec::when("no_such_predicate", Json::array());
    EXPECT_TRUE(validate_config(c).has(ViolationCode::UnknownPredicate));

    c = two_state();
    c.transitions[0].condition = ConditionSpec::when("steps_exceeded", Json::array({"three"}));
    EXPECT_TRUE(validate_config(c).has(ViolationCode::UnknownPredicate));

    c = two_state();
    c.states.push_back(c.states[0]);
    EXPECT_TRUE(validate_config(c).has(ViolationCode::DupStateId));

    c = two_state();
    EXPECT_TRUE(validate_config(c, 1).has(ViolationCode::StateCapExceeded));
}

TEST(Serialize, RoundTripsFuzzedConfigsExactly) {
    gen::Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const auto c = gen::random_config(rng);
        const auto text = serialize_config(c);
        EXPECT_EQ(deserialize_config(text), c);
        EXPECT_EQ(serialize_config(deserialize_config(text)), text);
    }
}

TEST(Serialize, PreservesUnknownFields) {
    auto j = to_json(two_state());
    j["owner"] = "team-a";
    j["states"][0]["color"] = "blue";
    j["transitions"][0]["condition"]["hint"] = 3;
    const auto c = config_from_json(j);
    const auto back = Json::parse(serialize_config(c));
    EXPECT_EQ(back["owner"], "team-a");
    EXPECT_EQ(back["states"][0]["color"], "blue");
    EXPECT_EQ(back["transitions"][0]["condition"]["hint"], 3);
}

TEST(Serialize, SchemaErrorsNameThePath) {
    auto j = to_json(two_state());
    j["states"][1].erase("id");
    try {
        config_from_json(j);
        FAIL() << "expected SchemaError";
    } catch (const SchemaError& e) {
        EXPECT_NE(std::string(e.what()).find("$.states[1].id"), std::string::npos) << e.what();
    }
}

TEST(StructuralEquality, IgnoresOrderAndVersion) {
    auto a = scenarios::default_research_config();
    auto b = a;
    std::reverse(b.states.begin(), b.states.end());
    std::reverse(b.transitions.begin(), b.transitions.end());
    b.version = 7;
    EXPECT_TRUE(structurally_equal(a, b));
    EXPECT_EQ(topology_projection(a), topology_projection(b));
    b.states[0].instruction += " more";
    EXPECT_FALSE(structurally_equal(a, b));
    EXPECT_EQ(topology_projection(a), topology_projection(b));
}

TEST(Outgoing, OrdersByPriorityThenId) {
    const auto c = scenarios::default_research_config();
    const auto out = c.outgoing("Browsing");
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0]->id, "t_browsing_analysis");
    EXPECT_EQ(out[1]->id, "t_browsing_search");
}
