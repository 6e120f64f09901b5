#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "evofsm/memory.hpp"
#include "evofsm/scenarios.hpp"
#include "support/generators.hpp"

using namespace evofsm;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() /
                ("evofsm-unit-" + std::to_string(::getpid()) + "-" +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

ExperienceRecord record_with(std::vector<double> embedding, Outcome outcome, FsmConfig cfg = scenarios::default_research_config()) {
    ExperienceRecord r;
    r.query_text = "q";
    r.query_embedding = std::move(embedding);
    r.outcome = outcome;
    r.config_snapshot = std::move(cfg);
    return r;
}

std::vector<double> axis(std::size_t dim, std::size_t i, double second = 0.0) {
    std::vector<double> v(dim, 0.0);
    v[i] = 1.0;
    if (second != 0.0) {
        v[(i + 1) % dim] = second;
        l2_normalize(v);
    }
    return v;
}

// Independent FNV-1a 64 and parity for the hashing oracle.
std::uint64_t fnv(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

int bits(std::uint64_t x) {
    int n = 0;
    for (; x; x >>= 1) n += static_cast<int>(x & 1);
    return n;
}

}  // namespace

TEST(HashingEmbedder, MatchesHandComputedBuckets) {
    HashingEmbedder e(8);
    const std::vector<std::string> tokens = {"three", "gorges", "dam", "report", "dam"};
    std::vector<double> want(8, 0.0);
    for (const auto& t : tokens) want[fnv(t) % 8] += bits(fnv(t)) % 2 == 0 ? 1.0 : -1.0;
    double n = 0;
    for (double x : want) n += x * x;
    ASSERT_GT(n, 0.0);
    for (double& x : want) x /= std::sqrt(n);
    const auto got = e.embed("Three Gorges DAM, report: dam!");
    ASSERT_EQ(got.size(), 8u);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(got[i], want[i], 1e-12) << i;
}

TEST(HashingEmbedder, DeterministicAndUnitLength) {
    HashingEmbedder e;
    const auto a = e.embed("energy density of a battery cell");
    EXPECT_EQ(a, e.embed("energy density of a battery cell"));
    double n = 0;
    for (double x : a) n += x * x;
    EXPECT_NEAR(n, 1.0, 1e-12);
    EXPECT_THROW(embed("   ", e), Error);
}

TEST(Similarity, SymmetricBoundedAndChecked) {
    gen::Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const auto a = gen::random_unit_vector(rng, 16), b = gen::random_unit_vector(rng, 16);
        EXPECT_DOUBLE_EQ(similarity(a, b), similarity(b, a));
        EXPECT_LE(std::abs(similarity(a, b)), 1.0 + 1e-9);
    }
    EXPECT_THROW(similarity(axis(4, 0), axis(5, 0)), DimensionMismatch);
}

TEST(Pool, RetrievalMatchesBruteForceWithTies) {
    gen::Rng rng(2);
    ExperiencePool pool(16);
    std::vector<ExperienceRecord> stored;
    for (int i = 0; i < 300; ++i) {
        auto v = (!stored.empty() && gen::chance(rng, 0.3)) ? gen::pick(rng, stored).query_embedding
                                                                 : gen::random_unit_vector(rng, 16);
        stored.push_back(pool.add_record(record_with(v, i % 2 ? Outcome::Success : Outcome::Failure)));
    }
    for (int q = 0; q < 50; ++q) {
        const auto query = gen::pick(rng, stored).query_embedding;
        std::vector<std::pair<double, std::int64_t>> oracle;
        for (const auto& r : stored) {
            double d = 0;
            for (std::size_t i = 0; i < 16; ++i) d += query[i] * r.query_embedding[i];
            oracle.emplace_back(-d, r.created_at);
        }
        std::sort(oracle.begin(), oracle.end());
        const auto got = pool.retrieve_top_k(query, 7);
        ASSERT_EQ(got.size(), 7u);
        for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(got[i].record.created_at, oracle[i].second);
    }
    for (const auto& r : pool.retrieve_top_k(stored[0].query_embedding, 50, RecordFilter::SuccessOnly))
        EXPECT_EQ(r.record.outcome, Outcome::Success);
    EXPECT_TRUE(pool.retrieve_top_k(stored[0].query_embedding, 0).empty());
    EXPECT_THROW(pool.retrieve_top_k(axis(8, 0), 3), DimensionMismatch);
}

TEST(Pool, AddRecordEnforcesInvariants) {
    ExperiencePool pool(4);
    auto bad = record_with({0.5, 0.5, 0.0, 0.0}, Outcome::Success);
    EXPECT_THROW(pool.add_record(bad), Error);
    auto wrong_dim = record_with(axis(5, 0), Outcome::Success);
    EXPECT_THROW(pool.add_record(wrong_dim), DimensionMismatch);
    auto success_with_constraints = record_with(axis(4, 0), Outcome::Success);
    success_with_constraints.failure_constraints.push_back({PatternKind::TransitionEdge, "A", "B", ""});
    EXPECT_THROW(pool.add_record(success_with_constraints), Error);
    const auto a = pool.add_record(record_with(axis(4, 0), Outcome::Success));
    const auto b = pool.add_record(record_with(axis(4, 1), Outcome::Failure));
    EXPECT_EQ(a.id, "exp-000001");
    EXPECT_EQ(b.created_at, a.created_at + 1);
    EXPECT_EQ(pool.count(Outcome::Success), 1u);
}

TEST(Pool, ReloadReproducesState) {
    TempDir dir;
    gen::Rng rng(3);
    std::vector<ExperienceRecord> written;
    {
        ExperiencePool pool(dir.file("pool.jsonl"), 8);
        for (int i = 0; i < 500; ++i) written.push_back(pool.add_record(gen::random_record(rng, 8)));
    }
    ExperiencePool again(dir.file("pool.jsonl"), 0, ExperiencePool::LoadMode::Strict);
    EXPECT_EQ(again.dimension(), 8u);
    EXPECT_EQ(again.records(), written);
    EXPECT_TRUE(check_pool_invariants(again.records(), 8).empty());
}

TEST(Pool, StrictRejectsCorruptLinesRecoverTruncatesOnlyTheTail) {
    TempDir dir;
    const auto path = dir.file("pool.jsonl");
    gen::Rng rng(4);
    {
        ExperiencePool pool(path, 8);
        pool.add_record(gen::random_record(rng, 8));
        pool.add_record(gen::random_record(rng, 8));
    }
    { std::ofstream(path, std::ios::app) << "{\"id\": \"exp-0000"; }
    try {
        ExperiencePool strict(path, 8, ExperiencePool::LoadMode::Strict);
        FAIL() << "expected CorruptPool";
    } catch (const CorruptPool& e) {
        ASSERT_EQ(e.lines().size(), 1u);
        EXPECT_EQ(e.lines()[0].line, 3u);
    }
    ExperiencePool recovered(path, 8);
    EXPECT_EQ(recovered.size(), 2u);
    EXPECT_EQ(recovered.add_record(gen::random_record(rng, 8)).id, "exp-000003");
    EXPECT_EQ(ExperiencePool(path, 8, ExperiencePool::LoadMode::Strict).size(), 3u);

    // A complete but unparseable line is never silently dropped.
    { std::ofstream(path, std::ios::app) << "garbage\n"; }
    EXPECT_THROW(ExperiencePool(path, 8, ExperiencePool::LoadMode::Strict), CorruptPool);
    EXPECT_THROW(ExperiencePool(path, 8, ExperiencePool::LoadMode::Recover), CorruptPool);
}

TEST(Pool, ConcurrentAppendsAreSerialized) {
    TempDir dir;
    const auto path = dir.file("pool.jsonl");
    {
        ExperiencePool pool(path, 8);
        std::vector<std::thread> threads;
        for (int t = 0; t < 4; ++t) {
            threads.emplace_back([&pool, t] {
                gen::Rng rng(100 + t);
                for (int i = 0; i < 25; ++i) {
                    pool.add_record(gen::random_record(rng, 8));
                    pool.retrieve_top_k(gen::random_unit_vector(rng, 8), 3);
                }
            });
        }
        for (auto& th : threads) th.join();
    }
    ExperiencePool again(path, 8, ExperiencePool::LoadMode::Strict);
    EXPECT_EQ(again.size(), 100u);
    EXPECT_TRUE(check_pool_invariants(again.records(), 8).empty());
}

TEST(WarmStart, EmptyPoolIsIdentity) {
    const auto cfg = scenarios::default_research_config();
    ExperiencePool pool(256);
    HashingEmbedder e;
    const auto ws = warm_start(cfg, "anything", pool, e);
    EXPECT_EQ(ws.config, cfg);
    EXPECT_FALSE(ws.prior_id);
}

TEST(WarmStart, AdoptsSimilarSuccessAndUnionsFailureConstraints) {
    HashingEmbedder e;
    const auto cfg = scenarios::default_research_config();
    auto verified = cfg;
    verified = apply_op(verified, op_from_json(scenarios::verifier_op_json())).config;

    ExperiencePool pool(e.dimension());
    auto success = record_with(embed("annual power output of the dam in 2023", e), Outcome::Success, verified);
    pool.add_record(success);
    auto failure = record_with(embed("annual power output of the dam in 2022", e), Outcome::Failure);
    failure.failure_constraints = {{PatternKind::TransitionEdge, "Browsing", "Search", "loop"},
                                   {PatternKind::ToolInState, "Analysis", "browse", "x"}};
    pool.add_record(failure);
    auto failure2 = failure;
    failure2.failure_constraints = {{PatternKind::TransitionEdge, "Browsing", "Search", "same target"}};
    pool.add_record(failure2);

    const auto ws = warm_start(cfg, "annual power output of the dam in 2023", pool, e);
    EXPECT_TRUE(ws.prior_id.has_value());
    EXPECT_NE(ws.config.find_state("Verifier"), nullptr);
    EXPECT_TRUE(validate_config(ws.config).ok());
    // Set-union oracle keyed by (kind, first, second).
    std::set<std::tuple<int, std::string, std::string>> want, got;
    for (const auto& r : {failure, failure2})
        for (const auto& p : r.failure_constraints) want.insert({static_cast<int>(p.kind), p.first, p.second});
    for (const auto& p : ws.config.negative_constraints) got.insert({static_cast<int>(p.kind), p.first, p.second});
    EXPECT_EQ(got, want);
    EXPECT_EQ(ws.config.negative_constraints.size(), want.size());
}

TEST(WarmStart, DissimilarOrStalePriorsFallBack) {
    HashingEmbedder e;
    const auto cfg = scenarios::default_research_config();
    ExperiencePool pool(e.dimension());
    auto stale = cfg;
    stale.initial_state = "Gone";
    pool.add_record(record_with(embed("ferry on-time rate", e), Outcome::Success, stale));
    auto ws = warm_start(cfg, "ferry on-time rate", pool, e);
    EXPECT_FALSE(ws.prior_id);
    EXPECT_EQ(ws.config, cfg);
    ws = warm_start(cfg, "completely unrelated botanical garden", pool, e);
    EXPECT_FALSE(ws.prior_id);
}
