#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../json_util.hpp"
#include "evofsm/backends.hpp"
#include "evofsm/text.hpp"

namespace evofsm {

using namespace detail;

Json to_json(const ToolResult& r) {
    return {{"tool", r.tool}, {"input", r.input}, {"output", r.output}, {"url", r.url}, {"rank", r.rank}};
}

ToolResult tool_result_from_json(const Json& j, const std::string& path) {
    require_object(j, path);
    ToolResult r;
    r.tool = req_string(j, "tool", path);
    r.input = opt_string(j, "input", path);
    r.output = opt_string(j, "output", path);
    r.url = opt_string(j, "url", path);
    r.rank = static_cast<int>(opt_int(j, "rank", path, 0));
    return r;
}

std::string normalize_query_key(std::string_view query) {
    auto s = text::trim(query);
    while (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
        s = text::trim(std::string_view(s).substr(1, s.size() - 2));
    return text::collapse_whitespace(text::to_lower(s));
}

std::string normalize_url_key(std::string_view url) {
    auto s = text::trim(url);
    while (!s.empty() && s.back() == '/') s.pop_back();
    const auto scheme_end = s.find("://");
    const auto host_end = scheme_end == std::string::npos ? std::string::npos : s.find('/', scheme_end + 3);
    const auto host_part = s.substr(0, host_end);
    return text::to_lower(host_part) + (host_end == std::string::npos ? "" : s.substr(host_end));
}

namespace {

std::string render_hit(const Json& hit) {
    std::string out = hit.value("title", "");
    const auto link = hit.value("link", "");
    const auto snippet = hit.value("snippet", "");
    if (!link.empty()) out += "\n" + link;
    if (!snippet.empty()) out += "\n" + snippet;
    return out;
}

}  // namespace

FixtureTools::FixtureTools(std::size_t output_limit) : limit_(output_limit) {}

std::shared_ptr<FixtureTools> FixtureTools::from_directory(const std::string& dir,
                                                           std::size_t output_limit) {
    namespace fs = std::filesystem;
    auto tools = std::make_shared<FixtureTools>(output_limit);
    if (!fs::is_directory(dir)) throw StorageFailure("fixture corpus directory not found: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
        std::ifstream in(file, std::ios::binary);
        std::stringstream buffer;
        buffer << in.rdbuf();
        try {
            tools->add_document(Json::parse(buffer.str()), file.filename().string());
        } catch (const Json::parse_error& e) {
            throw SchemaError(file.string(), e.what());
        }
    }
    return tools;
}

void FixtureTools::add_document(const Json& doc, const std::string& path) {
    require_object(doc, path);
    if (auto it = doc.find("searches"); it != doc.end()) {
        const auto p = child(path, "searches");
        require_array(*it, p);
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto& s = (*it)[i];
            const auto sp = index(p, i);
            require_object(s, sp);
            const auto& results = require_array(require_field(s, "results", sp), child(sp, "results"));
            add_search(req_string(s, "query", sp), results.get<std::vector<Json>>());
        }
    }
    if (auto it = doc.find("pages"); it != doc.end()) {
        const auto p = child(path, "pages");
        require_array(*it, p);
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto& pg = (*it)[i];
            const auto pp = index(p, i);
            require_object(pg, pp);
            add_page(req_string(pg, "url", pp), req_string(pg, "text", pp));
        }
    }
}

void FixtureTools::add_search(std::string query, std::vector<Json> hits) {
    searches_[normalize_query_key(query)] = std::move(hits);
}

void FixtureTools::add_page(std::string url, std::string text) {
    pages_[normalize_url_key(url)] = std::move(text);
}

std::vector<ToolResult> FixtureTools::search(std::string_view query) {
    const auto key = normalize_query_key(query);
    auto it = searches_.find(key);
    if (it == searches_.end()) throw FixtureMiss("search:" + key);
    std::vector<ToolResult> out;
    int rank = 1;
    for (const auto& hit : it->second) {
        out.push_back({"search", std::string(query), text::truncate_utf8(render_hit(hit), limit_),
                       hit.value("link", ""), rank++});
    }
    return out;
}

ToolResult FixtureTools::browse(std::string_view url) {
    const auto key = normalize_url_key(url);
    auto it = pages_.find(key);
    if (it == pages_.end()) throw FixtureMiss("browse:" + key);
    return {"browse", std::string(url), text::truncate_utf8(it->second, limit_), std::string(url), 0};
}

Json FixtureTools::to_document() const {
    Json doc = {{"searches", Json::array()}, {"pages", Json::array()}};
    for (const auto& [q, hits] : searches_) doc["searches"].push_back({{"query", q}, {"results", hits}});
    for (const auto& [u, t] : pages_) doc["pages"].push_back({{"url", u}, {"text", t}});
    return doc;
}

// ---------------------------------------------------------------------------
// Live
// ---------------------------------------------------------------------------

LiveTools::LiveTools(ToolEndpoints endpoints, std::shared_ptr<Transport> transport, RetryPolicy retry,
                     std::size_t output_limit)
    : endpoints_(std::move(endpoints)),
      transport_(std::move(transport)),
      retry_(std::move(retry)),
      limit_(output_limit) {}

std::vector<ToolResult> LiveTools::search(std::string_view query) {
    HttpRequest http;
    http.url = endpoints_.search_url;
    http.headers = {{"Content-Type", "application/json"}, {"X-API-KEY", endpoints_.search_api_key}};
    http.body = Json{{"q", std::string(query)}}.dump();
    const auto response = send_with_retry(*transport_, http, retry_);
    std::vector<ToolResult> out;
    try {
        const auto j = Json::parse(response.body);
        int rank = 1;
        for (const auto& hit : j.value("organic", Json::array())) {
            out.push_back({"search", std::string(query), text::truncate_utf8(render_hit(hit), limit_),
                           hit.value("link", ""), hit.value("position", rank)});
            ++rank;
        }
    } catch (const Json::exception& e) {
        throw EndpointError(std::string("unexpected search response shape: ") + e.what());
    }
    return out;
}

ToolResult LiveTools::browse(std::string_view url) {
    HttpRequest http;
    http.method = "GET";
    auto base = endpoints_.reader_base_url;
    if (!base.empty() && base.back() == '/') base.pop_back();
    http.url = base + "/" + std::string(url);
    const auto response = send_with_retry(*transport_, http, retry_);
    return {"browse", std::string(url), text::truncate_utf8(response.body, limit_), std::string(url), 0};
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

void ToolRegistry::add(std::string name, ToolFn fn) { tools_[std::move(name)] = std::move(fn); }

bool ToolRegistry::has(std::string_view name) const { return tools_.find(name) != tools_.end(); }

std::vector<ToolResult> ToolRegistry::call(std::string_view name, const std::string& input) const {
    auto it = tools_.find(name);
    if (it == tools_.end()) throw BackendFailure("no tool named '" + std::string(name) + "'");
    return it->second(input);
}

std::vector<std::string> ToolRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [name, fn] : tools_) out.push_back(name);
    return out;
}

ToolRegistry ToolRegistry::standard(std::shared_ptr<ToolBackend> backend) {
    ToolRegistry registry;
    if (!backend) return registry;
    registry.add("search", [backend](const std::string& q) { return backend->search(q); });
    registry.add("browse", [backend](const std::string& u) { return std::vector<ToolResult>{backend->browse(u)}; });
    return registry;
}

std::string render_tool_results(const std::vector<ToolResult>& results) {
    if (results.empty()) return "(no results)";
    std::string out;
    for (const auto& r : results) {
        if (!out.empty()) out += "\n\n";
        if (r.rank > 0) out += "[" + std::to_string(r.rank) + "] ";
        out += r.output;
    }
    return out;
}

}  // namespace evofsm
