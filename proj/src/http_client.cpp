#include "http_client.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "amem/errors.hpp"

namespace amem::detail {
namespace {

std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw TransportError("endpoint URL needs a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::string env_secret(const std::string& variable) {
    if (variable.empty()) {
        return {};
    }
    const char* value = std::getenv(variable.c_str());
    return value ? std::string(value) : std::string();
}

std::string post_json(const std::string& url, const std::string& body,
                      const HttpPostOptions& options) {
    const auto [origin, path] = split_url(url);
    std::string last_error;
    for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
        if (attempt > 0) {
            const auto delay = options.initial_backoff * (1LL << (attempt - 1));
            std::this_thread::sleep_for(delay);
        }
        httplib::Client client(origin);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
        const auto usecs =
            std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        httplib::Headers headers;
        if (!options.bearer_token.empty()) {
            headers.emplace("Authorization", "Bearer " + options.bearer_token);
        }
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_error = "request to " + url + " failed: " + httplib::to_string(res.error());
        } else if (res->status >= 200 && res->status < 300) {
            return res->body;
        } else if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status) + " from " + url;
        } else {
            throw TransportError("HTTP " + std::to_string(res->status) + " from " + url + ": " +
                                 res->body.substr(0, 512));
        }
        spdlog::warn("attempt {}/{}: {}", attempt + 1, options.max_retries + 1, last_error);
    }
    throw TransportError(last_error + " (retries exhausted)");
}

}  // namespace amem::detail
