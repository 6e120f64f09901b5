#include <bit>
#include <cmath>

#include "evofsm/backends.hpp"
#include "evofsm/text.hpp"

namespace evofsm {

void l2_normalize(std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    if (sum <= 0.0) throw Error("cannot normalize a zero vector");
    const double norm = std::sqrt(sum);
    for (double& x : v) x /= norm;
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) throw Error("embedding dimension must be positive");
}

std::vector<double> HashingEmbedder::embed(std::string_view text) {
    const auto tokens = text::word_tokens(text);
    if (tokens.empty()) throw Error("cannot embed text without word tokens");
    std::vector<double> v(dim_, 0.0);
    for (const auto& token : tokens) {
        const auto h = text::fnv1a64(token);
        const double sign = (std::popcount(h) % 2 == 0) ? 1.0 : -1.0;
        v[h % dim_] += sign;
    }
    // Tokens may cancel to zero; fall back to the unsigned histogram.
    bool all_zero = true;
    for (double x : v) all_zero = all_zero && x == 0.0;
    if (all_zero) {
        for (const auto& token : tokens) v[text::fnv1a64(token) % dim_] += 1.0;
    }
    l2_normalize(v);
    return v;
}

LiveEmbedder::LiveEmbedder(ChatEndpoint endpoint, std::shared_ptr<Transport> transport,
                           RetryPolicy retry)
    : endpoint_(std::move(endpoint)), transport_(std::move(transport)), retry_(std::move(retry)) {}

std::vector<double> LiveEmbedder::embed(std::string_view text) {
    if (text.empty()) throw Error("cannot embed empty text");
    HttpRequest http;
    auto base = endpoint_.base_url;
    if (!base.empty() && base.back() == '/') base.pop_back();
    http.url = base + "/embeddings";
    http.headers = {{"Content-Type", "application/json"}};
    if (!endpoint_.api_key.empty()) http.headers.emplace_back("Authorization", "Bearer " + endpoint_.api_key);
    http.body = Json{{"model", endpoint_.model}, {"input", std::string(text)}}.dump();

    const auto response = send_with_retry(*transport_, http, retry_);
    std::vector<double> v;
    try {
        const auto j = Json::parse(response.body);
        v = j.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const Json::exception& e) {
        throw EndpointError(std::string("unexpected embedding response shape: ") + e.what());
    }
    if (v.empty()) throw EndpointError("embedding endpoint returned an empty vector");
    if (dim_ != 0 && v.size() != dim_) {
        throw DimensionMismatch("embedding endpoint returned " + std::to_string(v.size()) +
                                " dimensions, expected " + std::to_string(dim_));
    }
    dim_ = v.size();
    l2_normalize(v);
    return v;
}

}  // namespace evofsm
