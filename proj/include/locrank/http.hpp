#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <string_view>

namespace locrank {

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Minimal POST-JSON transport. Implementations throw Error{transport} when
/// no response could be obtained at all.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post_json(std::string_view route, const std::string& body) = 0;
};

struct HttpEndpoint {
    std::string base_url;  ///< e.g. "http://localhost:8000/v1"
    std::string api_key;   ///< sent as a Bearer token when non-empty
    std::chrono::seconds timeout{60};
};

/// cpp-httplib backed transport; `route` is appended to the base URL path.
std::unique_ptr<HttpTransport> make_http_transport(const HttpEndpoint& endpoint);

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
};

/// POSTs with bounded retries on transport failures, 429 and 5xx. Returns the
/// first 2xx response; throws Error{transport} once attempts are exhausted and
/// Error{protocol} on other non-2xx statuses.
HttpResponse post_with_retry(HttpTransport& transport, std::string_view route,
                             const std::string& body, const RetryPolicy& policy);

} // namespace locrank
