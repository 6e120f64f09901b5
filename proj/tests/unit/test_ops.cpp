#include <gtest/gtest.h>

#include "evofsm/evolution.hpp"
#include "evofsm/ops.hpp"
#include "evofsm/scenarios.hpp"
#include "support/generators.hpp"

using namespace evofsm;

namespace {

AtomicOp verifier_op() { return op_from_json(scenarios::verifier_op_json()); }

RejectCode rejection(const FsmConfig& c, const AtomicOp& op, const ApplyOptions& options = {}) {
    try {
        apply_op(c, op, options);
    } catch (const OpRejected& e) {
        return e.code();
    }
    ADD_FAILURE() << op.label() << " was accepted";
    return RejectCode::MalformedOp;
}

}  // namespace

TEST(Ops, VerifierSpliceReplacesBrowsingExits) {
    const auto base = scenarios::default_research_config();
    const auto r = apply_op(base, verifier_op());
    EXPECT_EQ(r.config.version, base.version + 1);
    ASSERT_NE(r.config.find_state("Verifier"), nullptr);
    EXPECT_EQ(r.config.find_transition("t_browsing_analysis"), nullptr);
    EXPECT_EQ(r.config.find_transition("t_browsing_search"), nullptr);
    ASSERT_EQ(r.config.outgoing("Browsing").size(), 1u);
    EXPECT_EQ(r.config.outgoing("Browsing")[0]->to_state, "Verifier");
    EXPECT_EQ(r.inverse.kind(), OpKind::DeleteState);
    EXPECT_TRUE(structurally_equal(undo(r.config, r.inverse), base));
}

TEST(Ops, ReviseTouchesOnlyTheInstruction) {
    const auto base = scenarios::default_research_config();
    const auto op = parse_proposal("```json\n[" + scenarios::precision_op_json().dump() + "]\n```", base).at(0);
    ASSERT_EQ(op.kind(), OpKind::ReviseInstruction);
    const auto r = apply_op(base, op);
    EXPECT_EQ(topology_projection(r.config), topology_projection(base));
    EXPECT_NE(r.config.find_state("Browsing")->instruction.find(scenarios::kPrecisionClause), std::string::npos);
    EXPECT_TRUE(structurally_equal(undo(r.config, r.inverse), base));
}

TEST(Ops, ModifyTransitionInverseRestoresFields) {
    const auto base = scenarios::default_research_config();
    AtomicOp op{ModifyTransitionPayload{"t_browsing_search", "Analysis", 5, ConditionSpec::judged("done?")}, "x"};
    const auto r = apply_op(base, op);
    const auto* t = r.config.find_transition("t_browsing_search");
    EXPECT_EQ(t->to_state, "Analysis");
    EXPECT_EQ(t->priority, 5);
    EXPECT_EQ(t->condition.kind, ConditionKind::RouterJudged);
    EXPECT_TRUE(structurally_equal(undo(r.config, r.inverse), base));
}

TEST(Ops, RejectionCodes) {
    const auto base = scenarios::default_research_config();
    EXPECT_EQ(rejection(base, {DeleteStatePayload{"Search", {}, {}}, ""}), RejectCode::DeleteInitial);
    EXPECT_EQ(rejection(base, {DeleteStatePayload{"Analysis", {}, {}}, ""}), RejectCode::DeleteLastTerminal);
    EXPECT_EQ(rejection(base, {DeleteStatePayload{"Nope", {}, {}}, ""}), RejectCode::UnknownTarget);
    EXPECT_EQ(rejection(base, {ReviseInstructionPayload{"Nope", "x"}, ""}), RejectCode::UnknownTarget);
    EXPECT_EQ(rejection(base, {ModifyTransitionPayload{"t_search_browsing", {}, {}, {}}, ""}), RejectCode::MalformedOp);
    EXPECT_EQ(rejection(base, verifier_op(), {.max_states = 3}), RejectCode::StateCap);
    // Deleting Browsing after the splice leaves the Verifier unreachable.
    const auto spliced = apply_op(base, verifier_op()).config;
    EXPECT_EQ(rejection(spliced, {DeleteStatePayload{"Browsing", {}, {}}, ""}), RejectCode::InvalidResult);
}

TEST(Ops, ForbiddenEdgesBlockOpsUnlessUndoing) {
    auto base = scenarios::default_research_config();
    base.negative_constraints.push_back({PatternKind::TransitionEdge, "Browsing", "Verifier", "looped before"});
    EXPECT_EQ(rejection(base, verifier_op()), RejectCode::ForbiddenByMemory);
    const auto r = apply_op(base, verifier_op(), {.check_memory = false});
    EXPECT_TRUE(structurally_equal(undo(r.config, r.inverse), base));
}

TEST(Ops, JsonRoundTrip) {
    gen::Rng rng(5);
    for (int i = 0; i < 300; ++i) {
        const auto c = gen::random_config(rng);
        const auto op = gen::random_op(rng, c);
        EXPECT_EQ(op_from_json(to_json(op)), op);
    }
}

TEST(Ops, FuzzedApplyUndoIsIdentity) {
    gen::Rng rng(6);
    int accepted = 0;
    for (int i = 0; i < 500; ++i) {
        const auto c = gen::random_config(rng, 9);
        const auto op = gen::random_op(rng, c);
        try {
            const auto r = apply_op(c, op);
            ++accepted;
            ASSERT_TRUE(validate_config(r.config).ok()) << op.label();
            ASSERT_LE(r.config.states.size(), kDefaultMaxStates);
            ASSERT_TRUE(structurally_equal(undo(r.config, r.inverse), c)) << op.label();
        } catch (const OpRejected&) {
        }
    }
    EXPECT_GT(accepted, 200);
}
