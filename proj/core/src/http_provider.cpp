#include <thread>

#include "loom/llm.hpp"

#include <httplib.h>

namespace loom {

using nlohmann::json;

HttpProvider::HttpProvider(HttpConfig config) : config_(std::move(config)) {}

namespace {

struct Endpoint {
    std::string origin; // scheme://host[:port]
    std::string path;   // prefix such as /v1
};

Endpoint split_url(const std::string& url) {
    const auto scheme = url.find("://");
    const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const auto slash = url.find('/', host_start);
    if (slash == std::string::npos) return {url, ""};
    auto path = url.substr(slash);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {url.substr(0, slash), path};
}

} // namespace

std::string HttpProvider::do_complete(const Prompt& prompt) {
    const auto endpoint = split_url(config_.base_url);
    const json body{{"model", config_.model},
                    {"messages", json::array({{{"role", "user"}, {"content", prompt.text}}})},
                    {"temperature", prompt.temperature},
                    {"max_tokens", prompt.max_tokens}};

    std::string last_error = "no attempt made";
    const int attempts = std::max(1, config_.retries);
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(250 << attempt));
        httplib::Client client(endpoint.origin);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_write_timeout(config_.timeout);
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

        auto res = client.Post(endpoint.path + "/chat/completions", headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw ProviderError("HTTP " + std::to_string(res->status) + " from " + config_.base_url + ": " +
                                res->body.substr(0, 400));
        try {
            auto doc = json::parse(res->body);
            return doc.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw ProviderError(std::string("malformed completion response: ") + e.what());
        }
    }
    throw ProviderError(last_error + " after " + std::to_string(attempts) + " attempt(s) to " + config_.base_url,
                        "transport_error");
}

} // namespace loom
