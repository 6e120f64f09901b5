#include <cstdlib>
#include <filesystem>

#include "evofsm/backends.hpp"

namespace evofsm {

namespace {

std::string env_or(const char* name, std::string fallback = {}) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : std::move(fallback);
}

}  // namespace

LiveSettings LiveSettings::from_env() {
    LiveSettings s;
    s.chat.base_url = env_or("CHAT_BASE_URL", "https://api.openai.com/v1");
    s.chat.api_key = env_or("CHAT_API_KEY");
    s.chat.model = env_or("CHAT_MODEL", "gpt-4o");
    if (auto embed_url = env_or("EMBED_BASE_URL"); !embed_url.empty()) {
        ChatEndpoint e;
        e.base_url = embed_url;
        e.api_key = s.chat.api_key;
        e.model = env_or("EMBED_MODEL", "text-embedding-3-small");
        s.embed = e;
    }
    s.tools.search_api_key = env_or("SEARCH_API_KEY");
    s.tools.reader_base_url = env_or("READER_BASE_URL", s.tools.reader_base_url);
    return s;
}

Backends make_backends(const BackendOptions& options) {
    namespace fs = std::filesystem;
    Backends b;

    auto live_parts = [&]() {
        auto transport = options.transport ? options.transport : make_http_transport();
        auto chat_endpoint = options.live.chat;
        chat_endpoint.seed = options.seed;
        auto chat = std::make_shared<LiveChat>(chat_endpoint, transport, options.retry);
        std::shared_ptr<Embedder> embedder;
        if (options.live.embed) {
            embedder = std::make_shared<LiveEmbedder>(*options.live.embed, transport, options.retry);
        } else {
            embedder = std::make_shared<HashingEmbedder>(options.embedding_dim);
        }
        auto tools = std::make_shared<LiveTools>(options.live.tools, transport, options.retry,
                                                 options.tool_output_limit);
        return std::tuple{std::shared_ptr<ChatBackend>(chat), embedder, std::shared_ptr<ToolBackend>(tools)};
    };

    switch (options.mode) {
        case BackendMode::Scripted: {
            const fs::path dir(options.fixtures_dir);
            if (options.fixtures_dir.empty()) throw Error("scripted backends need a fixtures directory");
            b.chat = ScriptedChat::from_file((dir / "script.json").string());
            b.embedder = std::make_shared<HashingEmbedder>(options.embedding_dim);
            b.tools = ToolRegistry::standard(
                FixtureTools::from_directory((dir / "corpus").string(), options.tool_output_limit));
            break;
        }
        case BackendMode::Live: {
            auto [chat, embedder, tools] = live_parts();
            b.chat = chat;
            b.embedder = embedder;
            b.tools = ToolRegistry::standard(tools);
            break;
        }
        case BackendMode::Replay: {
            auto cassette = options.shared_cassette
                                ? options.shared_cassette
                                : std::make_shared<Cassette>(options.cassette_path, Cassette::Mode::Replay);
            b.chat = std::make_shared<CassetteChat>(cassette);
            b.embedder = std::make_shared<CassetteEmbedder>(cassette, nullptr, options.embedding_dim);
            b.tools = ToolRegistry::standard(std::make_shared<CassetteTools>(cassette));
            break;
        }
        case BackendMode::Record: {
            if (options.cassette_path.empty() && !options.shared_cassette)
                throw Error("record mode needs a cassette path");
            auto cassette = options.shared_cassette
                                ? options.shared_cassette
                                : std::make_shared<Cassette>(options.cassette_path, Cassette::Mode::Record);
            std::shared_ptr<ChatBackend> chat;
            std::shared_ptr<Embedder> embedder;
            std::shared_ptr<ToolBackend> tools;
            if (!options.fixtures_dir.empty()) {
                // Recording over scripted fixtures yields an offline cassette for replay tests.
                const fs::path dir(options.fixtures_dir);
                chat = ScriptedChat::from_file((dir / "script.json").string());
                embedder = std::make_shared<HashingEmbedder>(options.embedding_dim);
                tools = FixtureTools::from_directory((dir / "corpus").string(), options.tool_output_limit);
            } else {
                std::tie(chat, embedder, tools) = live_parts();
            }
            b.chat = std::make_shared<CassetteChat>(cassette, chat);
            b.embedder = std::make_shared<CassetteEmbedder>(cassette, embedder, embedder->dimension());
            b.tools = ToolRegistry::standard(std::make_shared<CassetteTools>(cassette, tools));
            break;
        }
    }
    return b;
}

}  // namespace evofsm
