#include <filesystem>
#include <fstream>
#include <regex>

#include "evofsm/backends.hpp"
#include "evofsm/text.hpp"

namespace evofsm {

std::string normalize_for_fingerprint(std::string_view input) {
    static const std::regex timestamp(
        R"(\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}(:\d{2}(\.\d+)?)?(Z|[+-]\d{2}:?\d{2})?)");
    static const std::regex run_id(R"(run-[0-9a-fA-F]{6,})");
    std::string s(input);
    s = std::regex_replace(s, timestamp, "<ts>");
    s = std::regex_replace(s, run_id, "<run>");
    return text::collapse_whitespace(s);
}

std::string request_fingerprint(std::string_view kind, const Json& request) {
    return text::hash_hex(std::string(kind) + "\n" + normalize_for_fingerprint(request.dump()));
}

std::size_t fingerprint_distance(std::string_view a, std::string_view b) {
    const auto common = std::min(a.size(), b.size());
    std::size_t d = std::max(a.size(), b.size()) - common;
    for (std::size_t i = 0; i < common; ++i) d += a[i] != b[i] ? 1 : 0;
    return d;
}

Cassette::Cassette(std::string path, Mode mode) : path_(std::move(path)), mode_(mode) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) {
        if (mode_ == Mode::Replay) throw StorageFailure("cassette not found: " + path_);
        return;
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            auto j = Json::parse(line);
            entries_.emplace_back(j.at("fingerprint").get<std::string>(), j.at("response"));
        } catch (const Json::exception& e) {
            throw SchemaError(path_ + ":" + std::to_string(line_no), e.what());
        }
    }
}

std::size_t Cassette::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

Json Cassette::replay(const std::string& fingerprint) {
    std::lock_guard lock(mutex_);
    auto& cursor = cursor_[fingerprint];
    const Json* last = nullptr;
    std::size_t seen = 0;
    for (const auto& [fp, response] : entries_) {
        if (fp != fingerprint) continue;
        last = &response;
        if (seen++ == cursor) {
            ++cursor;
            return response;
        }
    }
    if (last) return *last;
    cursor_.erase(fingerprint);
    std::string best;
    std::size_t best_d = std::numeric_limits<std::size_t>::max();
    for (const auto& [fp, response] : entries_) {
        const auto d = fingerprint_distance(fp, fingerprint);
        if (d < best_d || (d == best_d && fp < best)) {
            best = fp;
            best_d = d;
        }
    }
    throw CassetteMiss(fingerprint, best);
}

std::string Cassette::nearest(const std::string& fingerprint) const {
    std::lock_guard lock(mutex_);
    std::string best;
    std::size_t best_d = std::numeric_limits<std::size_t>::max();
    for (const auto& [fp, response] : entries_) {
        const auto d = fingerprint_distance(fp, fingerprint);
        if (d < best_d || (d == best_d && fp < best)) {
            best = fp;
            best_d = d;
        }
    }
    return best;
}

void Cassette::record(const std::string& fingerprint, std::string_view kind, const Json& request,
                      const Json& response) {
    std::lock_guard lock(mutex_);
    entries_.emplace_back(fingerprint, response);
    if (auto dir = std::filesystem::path(path_).parent_path(); !dir.empty())
        std::filesystem::create_directories(dir);
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw StorageFailure("cannot append to cassette " + path_);
    Json line = {{"fingerprint", fingerprint}, {"kind", kind}, {"request", request}, {"response", response}};
    out << line.dump() << '\n';
    out.flush();
    if (!out) throw StorageFailure("write failed for cassette " + path_);
}

// ---------------------------------------------------------------------------

CassetteChat::CassetteChat(std::shared_ptr<Cassette> cassette, std::shared_ptr<ChatBackend> inner)
    : cassette_(std::move(cassette)), inner_(std::move(inner)) {
    if (cassette_->mode() == Cassette::Mode::Record && !inner_)
        throw Error("recording cassette needs an inner chat backend");
}

ChatReply CassetteChat::chat(const ChatRequest& request) {
    Json req = {{"role", request.role_label}, {"messages", Json::array()}};
    for (const auto& m : request.messages) req["messages"].push_back({{"role", m.role}, {"content", m.content}});
    const auto fp = request_fingerprint("chat", req);
    if (cassette_->mode() == Cassette::Mode::Replay) {
        const auto response = cassette_->replay(fp);
        return make_reply(response.at("text").get<std::string>(), response.value("model", "replay"));
    }
    auto reply = inner_->chat(request);
    cassette_->record(fp, "chat", req, {{"text", reply.text}, {"model", reply.model}});
    return reply;
}

CassetteTools::CassetteTools(std::shared_ptr<Cassette> cassette, std::shared_ptr<ToolBackend> inner)
    : cassette_(std::move(cassette)), inner_(std::move(inner)) {
    if (cassette_->mode() == Cassette::Mode::Record && !inner_)
        throw Error("recording cassette needs an inner tool backend");
}

std::vector<ToolResult> CassetteTools::search(std::string_view query) {
    const Json req = {{"query", std::string(query)}};
    const auto fp = request_fingerprint("search", req);
    if (cassette_->mode() == Cassette::Mode::Replay) {
        const auto response = cassette_->replay(fp);
        std::vector<ToolResult> out;
        for (const auto& r : response.at("results")) out.push_back(tool_result_from_json(r));
        return out;
    }
    auto results = inner_->search(query);
    Json response = {{"results", Json::array()}};
    for (const auto& r : results) response["results"].push_back(to_json(r));
    cassette_->record(fp, "search", req, response);
    return results;
}

ToolResult CassetteTools::browse(std::string_view url) {
    const Json req = {{"url", std::string(url)}};
    const auto fp = request_fingerprint("browse", req);
    if (cassette_->mode() == Cassette::Mode::Replay) return tool_result_from_json(cassette_->replay(fp).at("result"));
    auto result = inner_->browse(url);
    cassette_->record(fp, "browse", req, {{"result", to_json(result)}});
    return result;
}

CassetteEmbedder::CassetteEmbedder(std::shared_ptr<Cassette> cassette, std::shared_ptr<Embedder> inner,
                                   std::size_t dim)
    : cassette_(std::move(cassette)), inner_(std::move(inner)), dim_(dim) {}

std::vector<double> CassetteEmbedder::embed(std::string_view text) {
    const Json req = {{"text", std::string(text)}};
    const auto fp = request_fingerprint("embed", req);
    if (cassette_->mode() == Cassette::Mode::Replay) {
        auto v = cassette_->replay(fp).at("embedding").get<std::vector<double>>();
        dim_ = v.size();
        return v;
    }
    auto v = inner_->embed(text);
    dim_ = v.size();
    cassette_->record(fp, "embed", req, {{"embedding", v}});
    return v;
}

}  // namespace evofsm
