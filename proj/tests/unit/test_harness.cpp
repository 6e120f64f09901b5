#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>

#include "evofsm/harness.hpp"
#include "evofsm/scenarios.hpp"

using namespace evofsm;
namespace fs = std::filesystem;

namespace {

struct SuiteFixture : ::testing::Test {
    scenarios::Scenario suite = scenarios::synthetic_suite();
    BackendFactory factory = [this] { return scenarios::make_backends(suite); };
    const std::vector<BenchmarkItem>& items(const std::string& name = "dataset") { return suite.datasets.at(name); }
};

}  // namespace

TEST(Dataset, ParsesAndRejectsDuplicates) {
    const auto items = parse_dataset("{\"id\":\"a\",\"question\":\"q\",\"answer\":\"1\"}\n\n{\"id\":\"b\",\"question\":\"q2\",\"answer\":\"2\"}\n");
    ASSERT_EQ(items.size(), 2u);
    EXPECT_EQ(items[1].answer, "2");
    EXPECT_THROW(parse_dataset("{\"id\":\"a\",\"question\":\"q\",\"answer\":\"1\"}\n{\"id\":\"a\",\"question\":\"q\",\"answer\":\"1\"}"),
                 SchemaError);
    EXPECT_THROW(parse_dataset("{\"id\":\"a\"}"), SchemaError);
}

TEST(Scoring, NormalizedExactMatch) {
    EXPECT_TRUE(exact_match("The 80.3 TWh.", "80.3 TWh"));
    EXPECT_FALSE(exact_match("about 80 TWh", "80.3 TWh"));
    EXPECT_FALSE(exact_match("", ""));
}

TEST(Report, EmptyDatasetHasUndefinedAccuracy) {
    const auto r = run_bench({}, scenarios::default_research_config(), [] { return Backends{}; }, {});
    EXPECT_EQ(r.total, 0u);
    EXPECT_FALSE(r.accuracy);
    EXPECT_EQ(format_accuracy(r.accuracy), "n/a");
    EXPECT_NE(render_table(r).find("accuracy=n/a"), std::string::npos);
}

TEST_F(SuiteFixture, SampleOfFiveMatchesFixtureDesign) {
    HarnessOptions evo;
    const auto a = run_bench(items("sample5"), suite.default_config, factory, evo);
    EXPECT_EQ(a.correct, 5u);
    HarnessOptions react;
    react.mode = Mode::React;
    const auto b = run_bench(items("sample5"), suite.default_config, factory, react);
    EXPECT_LE(b.correct, 3u);
    EXPECT_DOUBLE_EQ(*b.accuracy, static_cast<double>(b.correct) / static_cast<double>(b.total));
}

TEST_F(SuiteFixture, ReportsAreDeterministicAndWorkerIndependent) {
    HarnessOptions options;
    const auto a = to_json(run_bench(items(), suite.default_config, factory, options)).dump();
    const auto b = to_json(run_bench(items(), suite.default_config, factory, options)).dump();
    EXPECT_EQ(a, b);
    options.workers = 4;
    auto parallel = to_json(run_bench(items(), suite.default_config, factory, options));
    EXPECT_EQ(parallel["workers"], 4);
    parallel["workers"] = 1;
    EXPECT_EQ(parallel.dump(), a);
}

TEST_F(SuiteFixture, StaticAndReactLeaveNoTrace) {
    ExperiencePool pool(kDefaultEmbeddingDim);
    const auto backends = factory();
    for (auto mode : {Mode::Static, Mode::React, Mode::Rewrite}) {
        HarnessOptions options;
        options.mode = mode;
        options.pool = &pool;
        const auto ep = run_episode(suite.default_config, items()[0].question, backends, options);
        if (mode == Mode::Static) EXPECT_TRUE(ep.outcome.op_log.empty());
        EXPECT_FALSE(ep.record_id);
    }
    EXPECT_EQ(pool.size(), 0u);
}

TEST_F(SuiteFixture, ReactStepsCarryTheReactState) {
    const auto backends = factory();
    const auto t = run_react(items()[0].question, backends, {});
    ASSERT_FALSE(t.steps.empty());
    for (const auto& s : t.steps) EXPECT_EQ(s.state_id, "ReAct");
    EXPECT_EQ(t.halted_reason, HaltReason::Terminal);
}

TEST_F(SuiteFixture, SweepDuplicateCapsGiveIdenticalRows) {
    const auto rows = run_sweep(items("sample5"), suite.default_config, factory, {2, 2}, {});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].accuracy, rows[1].accuracy);
    EXPECT_EQ(rows[0].mean_ops, rows[1].mean_ops);
    EXPECT_EQ(sweep_csv(rows).substr(0, 21), "cap,accuracy,mean_ops");
}

TEST_F(SuiteFixture, JudgeScoringIsOptIn) {
    HarnessOptions options;
    options.judge = true;
    const auto r = run_bench(items("sample5"), suite.default_config, factory, options);
    EXPECT_EQ(r.correct, 5u);
}

TEST(RunDirectory, ContentAddressedAndComplete) {
    const auto world = scenarios::case1();
    const auto cfg = world.default_config;
    const auto q = world.items.front().query;
    EXPECT_EQ(run_id(cfg, q, Mode::EvoFsm, 1), run_id(cfg, q, Mode::EvoFsm, 1));
    EXPECT_NE(run_id(cfg, q, Mode::EvoFsm, 1), run_id(cfg, q, Mode::Static, 1));
    EXPECT_NE(run_id(cfg, q, Mode::EvoFsm, 1), run_id(cfg, q, Mode::EvoFsm, 2));

    const auto ep = run_episode(cfg, q, scenarios::make_backends(world), {});
    const auto dir = fs::temp_directory_path() / ("evofsm-unit-run-" + std::to_string(::getpid()));
    write_run_directory(ep, dir.string());
    for (const auto* f : {"trajectory.json", "verdicts.json", "oplog.jsonl", "final_config.json", "initial_config.json",
                          "tool_log.jsonl", "summary.json"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_TRUE(validate_config(load_config_file((dir / "final_config.json").string())).ok());
    fs::remove_all(dir);
}

TEST(Scenarios, FixturesAreSelfConsistent) {
    for (const auto& name : scenarios::scenario_names()) {
        const auto s = scenarios::by_name(name);
        EXPECT_TRUE(validate_config(s.default_config).ok()) << name;
        for (const auto& it : s.items) {
            EXPECT_NE(s.corpus.dump().find(it.answer_marker), std::string::npos) << it.id;
            EXPECT_EQ(it.vague_answer.find_first_of("0123456789"), std::string::npos) << it.id;
        }
    }
}

TEST(Scenarios, PairedQueriesOnlyResembleTheirPartner) {
    const auto s = scenarios::synthetic_suite();
    HashingEmbedder e;
    const auto& a = s.datasets.at("paired_first");
    const auto& b = s.datasets.at("paired_second");
    const double threshold = WarmStartParams{}.sim_threshold;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            const double sim = similarity(embed(a[i].question, e), embed(b[j].question, e));
            if (i == j) EXPECT_GE(sim, threshold) << a[i].id;
            else EXPECT_LT(sim, threshold) << a[i].id << " vs " << b[j].id;
        }
    }
}
