#include <gtest/gtest.h>

#include <unistd.h>

#include <atomic>
#include <filesystem>

#include "evofsm/backends.hpp"
#include "evofsm/engine.hpp"
#include "evofsm/scenarios.hpp"

using namespace evofsm;
namespace fs = std::filesystem;

namespace {

ChatRequest request(std::string role, std::string user) {
    return {std::move(role), {{"system", "sys"}, {"user", std::move(user)}}};
}

ScriptRule rule(std::string role, std::string reply) {
    ScriptRule r;
    r.role = std::move(role);
    r.reply = std::move(reply);
    return r;
}

/// Transport that counts calls and never reaches the network.
struct CountingTransport : Transport {
    std::atomic<int> calls{0};
    int failures_before_success = 0;
    HttpResponse send(const HttpRequest&) override {
        ++calls;
        if (calls <= failures_before_success) throw TransportError("connection reset");
        return {200, R"({"choices": [{"message": {"content": "hello"}}]})"};
    }
};

/// Oracle for hex-digit Hamming distance with length excess.
std::size_t hamming(const std::string& a, const std::string& b) {
    std::size_t d = a.size() > b.size() ? a.size() - b.size() : b.size() - a.size();
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) d += a[i] != b[i];
    return d;
}

fs::path temp_path(const std::string& name) {
    return fs::temp_directory_path() / ("evofsm-unit-" + std::to_string(::getpid()) + "-" + name);
}

}  // namespace

TEST(ScriptedChat, FirstMatchingRuleWins) {
    ScriptRule turn1 = rule("critic", "SECOND");
    turn1.turn = 1;
    ScriptRule contains = rule("critic", "HAS");
    contains.contains = {"needle"};
    ScriptRule pattern = rule("critic", "DIGIT");
    pattern.pattern = "answer [0-9]+";
    ScriptedChat chat({turn1, contains, pattern, rule("critic", "DEFAULT")});
    EXPECT_EQ(chat.chat(request("critic", "needle")).text, "HAS");
    EXPECT_EQ(chat.chat(request("critic", "plain")).text, "SECOND");
    EXPECT_EQ(chat.chat(request("critic", "answer 42")).text, "DIGIT");
    EXPECT_EQ(chat.chat(request("critic", "plain")).text, "DEFAULT");
    EXPECT_THROW(chat.chat(request("judge", "x")), ScriptMiss);
}

TEST(ScriptedChat, ExtractsToolBlocks) {
    ScriptedChat chat({rule("agent", "thinking\n```tool\n{\"name\": \"search\", \"input\": \"abc\"}\n```")});
    const auto r = chat.chat(request("agent", "q"));
    ASSERT_EQ(r.tool_calls.size(), 1u);
    EXPECT_EQ(r.tool_calls[0], (ToolCallRequest{"search", "abc"}));
    EXPECT_EQ(strip_tool_blocks(r.text), "thinking");
    EXPECT_TRUE(extract_tool_calls("```tool\nnot json\n```").empty());
}

TEST(ScriptedChat, RulesRoundTripThroughJson) {
    const auto world = scenarios::case1();
    for (const auto& r : world.rules) {
        const auto back = script_rule_from_json(to_json(r));
        EXPECT_EQ(to_json(back), to_json(r));
    }
}

TEST(FixtureTools, ServesNormalizedKeysAndBoundsOutput) {
    FixtureTools tools(40);
    tools.add_document(scenarios::case1().corpus);
    const auto hits = tools.search("  three GORGES dam annual report 2023 PDF ");
    ASSERT_FALSE(hits.empty());
    EXPECT_EQ(hits[0].rank, 1);
    EXPECT_NE(hits[0].url.find("2023-annual-environmental-report"), std::string::npos);
    for (const auto& h : hits) EXPECT_LE(h.output.size(), 40u);
    EXPECT_LE(tools.browse(hits[0].url).output.size(), 40u);
    try {
        tools.search("unknown query");
        FAIL();
    } catch (const FixtureMiss& e) {
        EXPECT_EQ(e.key(), "search:unknown query");
    }
}

TEST(LiveChat, RetriesTransportFailuresOnly) {
    auto transport = std::make_shared<CountingTransport>();
    transport->failures_before_success = 2;
    std::vector<long> sleeps;
    RetryPolicy retry;
    retry.sleep = [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); };
    LiveChat chat({"http://localhost:1", "k", "m", std::nullopt}, transport, retry);
    EXPECT_EQ(chat.chat(request("agent", "hi")).text, "hello");
    EXPECT_EQ(transport->calls, 3);
    EXPECT_EQ(sleeps, (std::vector<long>{1000, 2000}));

    transport->calls = 0;
    transport->failures_before_success = 5;
    EXPECT_THROW(chat.chat(request("agent", "hi")), EndpointError);
    EXPECT_EQ(transport->calls, 3);
}

TEST(Cassette, ReplayIsByteIdenticalAndOffline) {
    const auto path = temp_path("cassette.jsonl").string();
    fs::remove(path);
    const auto world = scenarios::case1();
    const auto query = world.items.front().query;
    Trajectory recorded, replayed;
    {
        auto inner = scenarios::make_backends(world);
        auto cassette = std::make_shared<Cassette>(path, Cassette::Mode::Record);
        Backends b;
        b.chat = std::make_shared<CassetteChat>(cassette, inner.chat);
        b.embedder = inner.embedder;
        auto fixture = std::make_shared<FixtureTools>();
        fixture->add_document(world.corpus);
        b.tools = ToolRegistry::standard(std::make_shared<CassetteTools>(cassette, fixture));
        recorded = run(world.default_config, query, b);
    }
    {
        BackendOptions options;
        options.mode = BackendMode::Replay;
        options.cassette_path = path;
        auto transport = std::make_shared<CountingTransport>();
        options.transport = transport;
        const auto b = make_backends(options);
        replayed = run(world.default_config, query, b);
        EXPECT_EQ(transport->calls, 0);
    }
    EXPECT_EQ(to_json(replayed).dump(), to_json(recorded).dump());
    fs::remove(path);
}

TEST(Cassette, MissNamesTheNearestFingerprint) {
    const auto path = temp_path("miss.jsonl").string();
    fs::remove(path);
    {
        Cassette rec(path, Cassette::Mode::Record);
        rec.record(request_fingerprint("chat", Json{{"x", 1}}), "chat", Json{{"x", 1}}, Json{{"text", "a"}});
        rec.record(request_fingerprint("chat", Json{{"x", 2}}), "chat", Json{{"x", 2}}, Json{{"text", "b"}});
    }
    auto cassette = std::make_shared<Cassette>(path, Cassette::Mode::Replay);
    const auto fp1 = request_fingerprint("chat", Json{{"x", 1}});
    const auto fp2 = request_fingerprint("chat", Json{{"x", 2}});
    const auto probe = request_fingerprint("chat", Json{{"x", 3}});
    const auto want = hamming(probe, fp1) < hamming(probe, fp2) || (hamming(probe, fp1) == hamming(probe, fp2) && fp1 < fp2)
                          ? fp1
                          : fp2;
    EXPECT_EQ(fingerprint_distance(probe, fp1), hamming(probe, fp1));
    EXPECT_EQ(fingerprint_distance("abc", "abd12"), hamming("abc", "abd12"));
    try {
        cassette->replay(probe);
        FAIL();
    } catch (const CassetteMiss& e) {
        EXPECT_EQ(e.nearest(), want);
    }
    fs::remove(path);
}

TEST(Fingerprint, IgnoresTimestampsAndRunIds) {
    const auto a = request_fingerprint("chat", Json{{"m", "at 2024-05-01T10:00:00Z in run-0123456789abcdef"}});
    const auto b = request_fingerprint("chat", Json{{"m", "at 2025-11-30T23:59:59Z in run-fedcba9876543210"}});
    EXPECT_EQ(a, b);
}
