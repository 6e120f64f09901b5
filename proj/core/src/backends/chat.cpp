#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "../json_util.hpp"
#include "evofsm/backends.hpp"
#include "evofsm/text.hpp"

namespace evofsm {

using namespace detail;

namespace {

constexpr std::string_view kToolFence = "```tool";
constexpr std::string_view kFenceEnd = "```";

// Calls `fn(begin, end, body)` for every ```tool ... ``` block.
template <typename Fn>
void for_each_tool_block(std::string_view text, Fn&& fn) {
    std::size_t pos = 0;
    while ((pos = text.find(kToolFence, pos)) != std::string_view::npos) {
        const auto body_start = pos + kToolFence.size();
        const auto close = text.find(kFenceEnd, body_start);
        if (close == std::string_view::npos) break;
        fn(pos, close + kFenceEnd.size(), text.substr(body_start, close - body_start));
        pos = close + kFenceEnd.size();
    }
}

}  // namespace

std::vector<ToolCallRequest> extract_tool_calls(std::string_view text) {
    std::vector<ToolCallRequest> calls;
    for_each_tool_block(text, [&](std::size_t, std::size_t, std::string_view body) {
        try {
            const auto j = Json::parse(body);
            if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) return;
            ToolCallRequest call;
            call.name = j["name"].get<std::string>();
            if (auto it = j.find("input"); it != j.end()) {
                call.input = it->is_string() ? it->get<std::string>() : it->dump();
            }
            calls.push_back(std::move(call));
        } catch (const Json::exception&) {
            spdlog::warn("ignoring malformed tool block");
        }
    });
    return calls;
}

std::string strip_tool_blocks(std::string_view text) {
    std::string out;
    std::size_t last = 0;
    for_each_tool_block(text, [&](std::size_t begin, std::size_t end, std::string_view) {
        out.append(text.substr(last, begin - last));
        last = end;
    });
    out.append(text.substr(last));
    return text::trim(out);
}

std::string render_tool_call(const ToolCallRequest& call) {
    Json j = {{"name", call.name}, {"input", call.input}};
    return "```tool\n" + j.dump() + "\n```";
}

ChatReply make_reply(std::string text, std::string model, double latency_ms) {
    ChatReply reply;
    reply.tool_calls = extract_tool_calls(text);
    if (text::trim(text).empty() && reply.tool_calls.empty())
        throw BackendFailure("backend returned an empty reply");
    reply.text = std::move(text);
    reply.model = std::move(model);
    reply.latency_ms = latency_ms;
    return reply;
}

// ---------------------------------------------------------------------------
// Scripted
// ---------------------------------------------------------------------------

Json to_json(const ScriptRule& rule) {
    Json j = {{"role", rule.role}, {"reply", rule.reply}};
    if (rule.turn) j["turn"] = *rule.turn;
    if (!rule.contains.empty()) j["contains"] = rule.contains;
    if (!rule.absent.empty()) j["absent"] = rule.absent;
    if (!rule.last_contains.empty()) j["last_contains"] = rule.last_contains;
    if (rule.pattern) j["pattern"] = *rule.pattern;
    return j;
}

ScriptRule script_rule_from_json(const Json& j, const std::string& path) {
    require_object(j, path);
    ScriptRule r;
    r.role = opt_string(j, "role", path, "*");
    if (j.contains("turn")) r.turn = static_cast<int>(req_int(j, "turn", path));
    r.contains = opt_string_list(j, "contains", path);
    r.absent = opt_string_list(j, "absent", path);
    r.last_contains = opt_string_list(j, "last_contains", path);
    if (j.contains("pattern")) r.pattern = req_string(j, "pattern", path);
    r.reply = req_string(j, "reply", path);
    return r;
}

std::string render_transcript(const ChatRequest& request) {
    std::string out;
    for (const auto& m : request.messages) {
        out += "[" + m.role + "]\n";
        out += m.content;
        out += "\n";
    }
    return out;
}

ScriptedChat::ScriptedChat(std::vector<ScriptRule> rules) : rules_(std::move(rules)) {
    compiled_.reserve(rules_.size());
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        if (!rules_[i].pattern) {
            compiled_.emplace_back();
            continue;
        }
        try {
            compiled_.emplace_back(std::regex(*rules_[i].pattern, std::regex::ECMAScript));
        } catch (const std::regex_error& e) {
            throw SchemaError("$.rules[" + std::to_string(i) + "].pattern",
                              std::string("invalid regex: ") + e.what());
        }
    }
}

std::shared_ptr<ScriptedChat> ScriptedChat::from_json(const Json& doc) {
    const Json* rules_json = &doc;
    std::string path = "$";
    if (doc.is_object()) {
        rules_json = &require_field(doc, "rules", "$");
        path = "$.rules";
    }
    require_array(*rules_json, path);
    std::vector<ScriptRule> rules;
    for (std::size_t i = 0; i < rules_json->size(); ++i)
        rules.push_back(script_rule_from_json((*rules_json)[i], index(path, i)));
    return std::make_shared<ScriptedChat>(std::move(rules));
}

std::shared_ptr<ScriptedChat> ScriptedChat::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StorageFailure("cannot read script " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return from_json(Json::parse(buffer.str()));
    } catch (const Json::parse_error& e) {
        throw SchemaError("$", std::string("invalid JSON in ") + path + ": " + e.what());
    }
}

ChatReply ScriptedChat::chat(const ChatRequest& request) {
    int turn = 0;
    {
        std::lock_guard lock(mutex_);
        turn = turns_[request.role_label]++;
    }
    const auto transcript = render_transcript(request);
    const std::string_view last =
        request.messages.empty() ? std::string_view{} : request.messages.back().content;

    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& r = rules_[i];
        if (r.role != "*" && r.role != request.role_label) continue;
        if (r.turn && *r.turn != turn) continue;
        bool ok = true;
        for (const auto& s : r.contains) ok = ok && text::contains(transcript, s);
        for (const auto& s : r.absent) ok = ok && !text::contains(transcript, s);
        for (const auto& s : r.last_contains) ok = ok && text::contains(last, s);
        if (ok && compiled_[i]) ok = std::regex_search(transcript, *compiled_[i]);
        if (ok) return make_reply(r.reply, "scripted");
    }
    throw ScriptMiss("no scripted rule for role '" + request.role_label + "' turn " +
                     std::to_string(turn));
}

// ---------------------------------------------------------------------------
// Live
// ---------------------------------------------------------------------------

HttpResponse send_with_retry(Transport& transport, const HttpRequest& request,
                             const RetryPolicy& policy) {
    auto backoff = policy.initial_backoff;
    for (int attempt = 0;; ++attempt) {
        try {
            auto response = transport.send(request);
            if (response.status < 200 || response.status >= 300) {
                throw EndpointError(request.url + " returned HTTP " +
                                    std::to_string(response.status) + ": " +
                                    text::truncate_utf8(response.body, 300));
            }
            return response;
        } catch (const TransportError& e) {
            if (attempt >= policy.retries) {
                throw EndpointError(request.url + " unreachable after " +
                                    std::to_string(attempt + 1) + " attempts: " + e.what());
            }
            spdlog::warn("transport failure on {} ({}), retrying in {} ms", request.url, e.what(),
                         backoff.count());
            if (policy.sleep) {
                policy.sleep(backoff);
            } else {
                std::this_thread::sleep_for(backoff);
            }
            backoff *= 2;
        }
    }
}

namespace {

std::string join_url(const std::string& base, std::string_view suffix) {
    if (!base.empty() && base.back() == '/') return base.substr(0, base.size() - 1) + std::string(suffix);
    return base + std::string(suffix);
}

}  // namespace

LiveChat::LiveChat(ChatEndpoint endpoint, std::shared_ptr<Transport> transport, RetryPolicy retry)
    : endpoint_(std::move(endpoint)), transport_(std::move(transport)), retry_(std::move(retry)) {}

ChatReply LiveChat::chat(const ChatRequest& request) {
    Json body = {{"model", endpoint_.model}, {"messages", Json::array()}};
    for (const auto& m : request.messages) {
        // Chat-completion endpoints have no "tool" role without a function-calling protocol.
        const auto role = m.role == "tool" ? std::string("user") : m.role;
        body["messages"].push_back({{"role", role}, {"content", m.content}});
    }
    if (endpoint_.seed) body["seed"] = *endpoint_.seed;

    HttpRequest http;
    http.url = join_url(endpoint_.base_url, "/chat/completions");
    http.headers = {{"Content-Type", "application/json"}};
    if (!endpoint_.api_key.empty()) http.headers.emplace_back("Authorization", "Bearer " + endpoint_.api_key);
    http.body = body.dump();

    const auto start = std::chrono::steady_clock::now();
    const auto response = send_with_retry(*transport_, http, retry_);
    const auto elapsed = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    try {
        const auto j = Json::parse(response.body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        return make_reply(content.is_string() ? content.get<std::string>() : std::string{},
                          j.value("model", endpoint_.model), elapsed);
    } catch (const Json::exception& e) {
        throw EndpointError(std::string("unexpected chat response shape: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Bundle helpers
// ---------------------------------------------------------------------------

ChatBackend& Backends::for_role(std::string_view role) const {
    if (auto it = role_chat.find(role); it != role_chat.end() && it->second) return *it->second;
    if (!chat) throw BackendFailure("no chat backend configured for role '" + std::string(role) + "'");
    return *chat;
}

std::string_view to_string(BackendMode mode) {
    switch (mode) {
        case BackendMode::Live: return "live";
        case BackendMode::Scripted: return "scripted";
        case BackendMode::Replay: return "replay";
        case BackendMode::Record: return "record";
    }
    return "scripted";
}

BackendMode backend_mode_from_string(std::string_view name) {
    if (name == "live") return BackendMode::Live;
    if (name == "scripted") return BackendMode::Scripted;
    if (name == "replay") return BackendMode::Replay;
    if (name == "record") return BackendMode::Record;
    throw Error("unknown backend mode '" + std::string(name) + "'");
}

}  // namespace evofsm
