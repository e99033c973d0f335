#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace amem::detail {

struct HttpPostOptions {
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::string bearer_token;
};

// POSTs a JSON body and returns the response body. Connection failures, 429
// and 5xx are retried with exponential backoff (initial_backoff * 2^attempt);
// other statuses fail immediately. Throws TransportError.
std::string post_json(const std::string& url, const std::string& body,
                      const HttpPostOptions& options);

// Reads the environment variable, empty string when unset or name is empty.
std::string env_secret(const std::string& variable);

}  // namespace amem::detail
