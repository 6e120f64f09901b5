#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "evofsm/errors.hpp"

namespace evofsm {

using Json = nlohmann::json;

inline constexpr std::size_t kDefaultToolOutputLimit = 4000;
inline constexpr std::size_t kDefaultEmbeddingDim = 256;

// ---------------------------------------------------------------------------
// Chat
// ---------------------------------------------------------------------------

struct ChatMessage {
    std::string role;  // system | user | assistant | tool
    std::string content;
};

struct ToolCallRequest {
    std::string name;
    std::string input;

    friend bool operator==(const ToolCallRequest&, const ToolCallRequest&) = default;
};

/// One call to a chat backend. `role_label` names the agent role
/// (agent, router, critic, proposer, reflector, rewriter, react, judge).
struct ChatRequest {
    std::string role_label;
    std::vector<ChatMessage> messages;
};

struct ChatReply {
    std::string text;
    std::vector<ToolCallRequest> tool_calls;
    std::string model;
    double latency_ms = 0.0;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatReply chat(const ChatRequest& request) = 0;
};

/**
 * Tool calls are requested by the agent as fenced blocks:
 *
 *     ```tool
 *     {"name": "search", "input": "three gorges dam 2023"}
 *     ```
 *
 * Malformed blocks are ignored.
 */
std::vector<ToolCallRequest> extract_tool_calls(std::string_view text);

/// `text` with every fenced tool block removed and surrounding whitespace trimmed.
std::string strip_tool_blocks(std::string_view text);

std::string render_tool_call(const ToolCallRequest& call);

/// Builds a reply from raw text; throws BackendFailure when the text is blank
/// and requests no tool.
ChatReply make_reply(std::string text, std::string model = {}, double latency_ms = 0.0);

/// A rule of a scripted chat table. Every populated matcher must hold.
struct ScriptRule {
    std::string role = "*";
    std::optional<int> turn;                 // per-role call index, from 0
    std::vector<std::string> contains;       // substrings of the whole transcript
    std::vector<std::string> absent;         // substrings that must not appear
    std::vector<std::string> last_contains;  // substrings of the last message
    std::optional<std::string> pattern;      // ECMAScript regex over the transcript
    std::string reply;
};

Json to_json(const ScriptRule& rule);
ScriptRule script_rule_from_json(const Json& j, const std::string& path = "$");

/// Table-driven chat backend; first matching rule wins.
class ScriptedChat : public ChatBackend {
public:
    explicit ScriptedChat(std::vector<ScriptRule> rules);

    static std::shared_ptr<ScriptedChat> from_json(const Json& doc);
    static std::shared_ptr<ScriptedChat> from_file(const std::string& path);

    ChatReply chat(const ChatRequest& request) override;

    const std::vector<ScriptRule>& rules() const { return rules_; }

private:
    std::vector<ScriptRule> rules_;
    std::vector<std::optional<std::regex>> compiled_;
    std::map<std::string, int, std::less<>> turns_;
    std::mutex mutex_;
};

/// Full transcript text used by scripted matching: "[role]\ncontent\n" per message.
std::string render_transcript(const ChatRequest& request);

// ---------------------------------------------------------------------------
// HTTP transport and live adapters
// ---------------------------------------------------------------------------

struct HttpRequest {
    std::string method = "POST";
    std::string url;
    std::vector<std::pair<std::string, std::string>> headers;
    std::string body;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Connection-level failure (refused, reset, timeout). Retried by live adapters.
class TransportError : public Error {
public:
    using Error::Error;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse send(const HttpRequest& request) = 0;
};

std::shared_ptr<Transport> make_http_transport(std::chrono::seconds timeout = std::chrono::seconds(60));

struct RetryPolicy {
    int retries = 2;
    std::chrono::milliseconds initial_backoff{1000};
    std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

/// Sends with retries on TransportError only; non-2xx responses raise EndpointError at once.
HttpResponse send_with_retry(Transport& transport, const HttpRequest& request,
                             const RetryPolicy& policy);

struct ChatEndpoint {
    std::string base_url;
    std::string api_key;
    std::string model;
    std::optional<std::int64_t> seed;
};

/// Chat-completions style endpoint: POST {base}/chat/completions, reply in choices[0].message.content.
class LiveChat : public ChatBackend {
public:
    LiveChat(ChatEndpoint endpoint, std::shared_ptr<Transport> transport, RetryPolicy retry = {});
    ChatReply chat(const ChatRequest& request) override;

private:
    ChatEndpoint endpoint_;
    std::shared_ptr<Transport> transport_;
    RetryPolicy retry_;
};

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

class Embedder {
public:
    virtual ~Embedder() = default;
    /// Unit-length vector of `dimension()` entries.
    virtual std::vector<double> embed(std::string_view text) = 0;
    /// 0 when not known before the first call.
    virtual std::size_t dimension() const = 0;
};

/**
 * @brief Deterministic offline embedder.
 *
 * Each lowercased word token is hashed (FNV-1a 64); the hash modulo the
 * dimension picks the bucket and the bit parity of the hash picks the sign
 * (+1 for even popcount). The accumulated vector is L2-normalized; if every
 * bucket cancels to zero the unsigned counts are used instead.
 */
class HashingEmbedder : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dim = kDefaultEmbeddingDim);
    std::vector<double> embed(std::string_view text) override;
    std::size_t dimension() const override { return dim_; }

private:
    std::size_t dim_;
};

/// POST {base}/embeddings with {"model","input"}; reads data[0].embedding.
class LiveEmbedder : public Embedder {
public:
    LiveEmbedder(ChatEndpoint endpoint, std::shared_ptr<Transport> transport, RetryPolicy retry = {});
    std::vector<double> embed(std::string_view text) override;
    std::size_t dimension() const override { return dim_; }

private:
    ChatEndpoint endpoint_;
    std::shared_ptr<Transport> transport_;
    RetryPolicy retry_;
    std::size_t dim_ = 0;
};

/// Scales `v` to unit L2 norm; throws Error on a zero vector.
void l2_normalize(std::vector<double>& v);

// ---------------------------------------------------------------------------
// Tools
// ---------------------------------------------------------------------------

struct ToolResult {
    std::string tool;
    std::string input;
    std::string output;
    std::string url;  // source descriptor
    int rank = 0;     // 1-based for search hits, 0 otherwise

    friend bool operator==(const ToolResult&, const ToolResult&) = default;
};

Json to_json(const ToolResult& r);
ToolResult tool_result_from_json(const Json& j, const std::string& path = "$");

class ToolBackend {
public:
    virtual ~ToolBackend() = default;
    virtual std::vector<ToolResult> search(std::string_view query) = 0;
    virtual ToolResult browse(std::string_view url) = 0;
};

std::string normalize_query_key(std::string_view query);
std::string normalize_url_key(std::string_view url);

/**
 * @brief Offline tool corpus.
 *
 * Loaded from a directory of JSON documents, each of the form
 * `{"searches": [{"query", "results": [{"title","link","snippet"}]}],
 *   "pages": [{"url", "text"}]}`. Keys are normalized on load and lookup.
 */
class FixtureTools : public ToolBackend {
public:
    explicit FixtureTools(std::size_t output_limit = kDefaultToolOutputLimit);

    static std::shared_ptr<FixtureTools> from_directory(const std::string& dir,
                                                        std::size_t output_limit = kDefaultToolOutputLimit);

    /// Merges one corpus document.
    void add_document(const Json& doc, const std::string& path = "$");
    void add_search(std::string query, std::vector<Json> hits);
    void add_page(std::string url, std::string text);

    std::vector<ToolResult> search(std::string_view query) override;
    ToolResult browse(std::string_view url) override;

    Json to_document() const;

private:
    std::size_t limit_;
    std::map<std::string, std::vector<Json>> searches_;
    std::map<std::string, std::string> pages_;
};

struct ToolEndpoints {
    std::string search_url = "https://google.serper.dev/search";
    std::string search_api_key;
    std::string reader_base_url = "https://r.jina.ai";
};

/// Serper-style search and Jina-style reader.
class LiveTools : public ToolBackend {
public:
    LiveTools(ToolEndpoints endpoints, std::shared_ptr<Transport> transport, RetryPolicy retry = {},
              std::size_t output_limit = kDefaultToolOutputLimit);
    std::vector<ToolResult> search(std::string_view query) override;
    ToolResult browse(std::string_view url) override;

private:
    ToolEndpoints endpoints_;
    std::shared_ptr<Transport> transport_;
    RetryPolicy retry_;
    std::size_t limit_;
};

/// Name -> callable used by the engine to execute tool calls.
class ToolRegistry {
public:
    using ToolFn = std::function<std::vector<ToolResult>(const std::string&)>;

    void add(std::string name, ToolFn fn);
    bool has(std::string_view name) const;
    std::vector<ToolResult> call(std::string_view name, const std::string& input) const;
    std::vector<std::string> names() const;

    /// Registers `search` and `browse` backed by `backend`.
    static ToolRegistry standard(std::shared_ptr<ToolBackend> backend);

private:
    std::map<std::string, ToolFn, std::less<>> tools_;
};

/// Text handed back to the agent for one tool call.
std::string render_tool_results(const std::vector<ToolResult>& results);

// ---------------------------------------------------------------------------
// Record / replay
// ---------------------------------------------------------------------------

/// Strips ISO-8601 timestamps and run ids, collapses whitespace.
std::string normalize_for_fingerprint(std::string_view text);

/// Fingerprint of a request: hash of kind plus normalized request JSON.
std::string request_fingerprint(std::string_view kind, const Json& request);

/// Hamming distance over hex digits; strings of unequal length count the excess.
std::size_t fingerprint_distance(std::string_view a, std::string_view b);

/**
 * @brief Ordered list of (fingerprint, response) pairs backed by a JSONL file.
 *
 * In REPLAY a fingerprint miss raises CassetteMiss and nothing is forwarded.
 * Repeated fingerprints are served in recording order; the last response is
 * reused once a fingerprint's recordings are exhausted.
 */
class Cassette {
public:
    enum class Mode { Record, Replay };

    Cassette(std::string path, Mode mode);

    Mode mode() const { return mode_; }
    const std::string& path() const { return path_; }
    std::size_t size() const;

    Json replay(const std::string& fingerprint);
    void record(const std::string& fingerprint, std::string_view kind, const Json& request,
                const Json& response);

    /// Lowest-distance recorded fingerprint, ties broken lexicographically; empty when none.
    std::string nearest(const std::string& fingerprint) const;

private:
    std::string path_;
    Mode mode_;
    std::vector<std::pair<std::string, Json>> entries_;
    std::map<std::string, std::size_t> cursor_;
    mutable std::mutex mutex_;
};

class CassetteChat : public ChatBackend {
public:
    /// `inner` is required in RECORD mode and ignored in REPLAY.
    CassetteChat(std::shared_ptr<Cassette> cassette, std::shared_ptr<ChatBackend> inner = nullptr);
    ChatReply chat(const ChatRequest& request) override;

private:
    std::shared_ptr<Cassette> cassette_;
    std::shared_ptr<ChatBackend> inner_;
};

class CassetteTools : public ToolBackend {
public:
    CassetteTools(std::shared_ptr<Cassette> cassette, std::shared_ptr<ToolBackend> inner = nullptr);
    std::vector<ToolResult> search(std::string_view query) override;
    ToolResult browse(std::string_view url) override;

private:
    std::shared_ptr<Cassette> cassette_;
    std::shared_ptr<ToolBackend> inner_;
};

class CassetteEmbedder : public Embedder {
public:
    CassetteEmbedder(std::shared_ptr<Cassette> cassette, std::shared_ptr<Embedder> inner,
                     std::size_t dim);
    std::vector<double> embed(std::string_view text) override;
    std::size_t dimension() const override { return dim_; }

private:
    std::shared_ptr<Cassette> cassette_;
    std::shared_ptr<Embedder> inner_;
    std::size_t dim_;
};

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

/// Handles for one worker. Roles without an override use `chat`.
struct Backends {
    std::shared_ptr<ChatBackend> chat;
    std::map<std::string, std::shared_ptr<ChatBackend>, std::less<>> role_chat;
    std::shared_ptr<Embedder> embedder;
    ToolRegistry tools;

    ChatBackend& for_role(std::string_view role) const;
};

enum class BackendMode { Live, Scripted, Replay, Record };

std::string_view to_string(BackendMode mode);
BackendMode backend_mode_from_string(std::string_view name);

/// Environment-derived live settings (CHAT_BASE_URL, CHAT_API_KEY, CHAT_MODEL,
/// EMBED_BASE_URL, SEARCH_API_KEY, READER_BASE_URL).
struct LiveSettings {
    ChatEndpoint chat;
    std::optional<ChatEndpoint> embed;
    ToolEndpoints tools;

    static LiveSettings from_env();
};

struct BackendOptions {
    BackendMode mode = BackendMode::Scripted;
    std::string fixtures_dir;   // scripted: script.json + corpus/
    std::string cassette_path;  // replay / record
    std::size_t embedding_dim = kDefaultEmbeddingDim;
    std::size_t tool_output_limit = kDefaultToolOutputLimit;
    std::optional<std::int64_t> seed;
    LiveSettings live;
    std::shared_ptr<Transport> transport;  // defaults to the HTTP transport
    RetryPolicy retry;
    std::shared_ptr<Cassette> shared_cassette;  // reuse across workers
};

Backends make_backends(const BackendOptions& options);

}  // namespace evofsm
