#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "evofsm/backends.hpp"

namespace evofsm {

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // /path?query
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("malformed url '" + url + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

class HttplibTransport : public Transport {
public:
    explicit HttplibTransport(std::chrono::seconds timeout) : timeout_(timeout) {}

    HttpResponse send(const HttpRequest& request) override {
        const auto parts = split_url(request.url);
        httplib::Client client(parts.origin);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);
        client.set_follow_location(true);

        httplib::Headers headers;
        std::string content_type = "application/json";
        for (const auto& [k, v] : request.headers) {
            if (k == "Content-Type") {
                content_type = v;
            } else {
                headers.emplace(k, v);
            }
        }

        httplib::Result result = request.method == "GET"
                                     ? client.Get(parts.path, headers)
                                     : client.Post(parts.path, headers, request.body, content_type);
        if (!result) throw TransportError(httplib::to_string(result.error()));
        return {result->status, result->body};
    }

private:
    std::chrono::seconds timeout_;
};

}  // namespace

std::shared_ptr<Transport> make_http_transport(std::chrono::seconds timeout) {
    return std::make_shared<HttplibTransport>(timeout);
}

}  // namespace evofsm
