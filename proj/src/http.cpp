#include "locrank/http.hpp"
#include "locrank/error.hpp"

#include <httplib.h>

#include <thread>

namespace locrank {

namespace {

// Splits "scheme://host:port/prefix" into the httplib client origin and path prefix.
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::config, "endpoint URL needs a scheme: " + base_url);
    }
    const auto path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {base_url, ""};
    }
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') {
        prefix.pop_back();
    }
    return {base_url.substr(0, path_start), prefix};
}

class HttplibTransport final : public HttpTransport {
public:
    explicit HttplibTransport(const HttpEndpoint& endpoint) : endpoint_(endpoint) {
        auto [origin, prefix] = split_base_url(endpoint.base_url);
        origin_ = std::move(origin);
        prefix_ = std::move(prefix);
    }

    HttpResponse post_json(std::string_view route, const std::string& body) override {
        httplib::Client client(origin_);
        client.set_connection_timeout(endpoint_.timeout);
        client.set_read_timeout(endpoint_.timeout);
        client.set_write_timeout(endpoint_.timeout);
        httplib::Headers headers;
        if (!endpoint_.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + endpoint_.api_key);
        }
        const std::string path = prefix_ + std::string(route);
        auto result = client.Post(path, headers, body, "application/json");
        if (!result) {
            throw Error(ErrorCode::transport,
                        "POST " + origin_ + path + " failed: " + httplib::to_string(result.error()));
        }
        return HttpResponse{result->status, result->body};
    }

private:
    HttpEndpoint endpoint_;
    std::string origin_;
    std::string prefix_;
};

} // namespace

std::unique_ptr<HttpTransport> make_http_transport(const HttpEndpoint& endpoint) {
    return std::make_unique<HttplibTransport>(endpoint);
}

HttpResponse post_with_retry(HttpTransport& transport, std::string_view route,
                             const std::string& body, const RetryPolicy& policy) {
    auto backoff = policy.initial_backoff;
    std::string last_error;
    const int attempts = std::max(1, policy.max_attempts);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        try {
            auto response = transport.post_json(route, body);
            if (response.status >= 200 && response.status < 300) {
                return response;
            }
            if (response.status != 429 && response.status < 500) {
                throw Error(ErrorCode::protocol, "HTTP " + std::to_string(response.status) + ": " +
                                                     response.body.substr(0, 512));
            }
            last_error = "HTTP " + std::to_string(response.status);
        } catch (const Error& e) {
            if (!e.retryable()) {
                throw;
            }
            last_error = e.what();
        }
        if (attempt < attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw Error(ErrorCode::transport, "gave up after " + std::to_string(attempts) +
                                          " attempts: " + last_error);
}

} // namespace locrank
