#pragma once

#include <httplib.h>

#include <atomic>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace testing {

// In-process HTTP server on an ephemeral loopback port.
class Loopback {
public:
    Loopback() = default;
    Loopback(const Loopback&) = delete;
    Loopback& operator=(const Loopback&) = delete;
    ~Loopback() { stop(); }

    httplib::Server& server() { return server_; }

    void start() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    void stop() {
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }
    std::string url(const std::string& prefix = "/v1") const {
        return "http://127.0.0.1:" + std::to_string(port_) + prefix;
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

struct Recorded {
    std::string path;
    std::string authorization;
    std::string content_type;
    std::string body;
};

class RequestLog {
public:
    void add(const httplib::Request& req) {
        std::lock_guard lock(mutex_);
        entries_.push_back({req.path, req.get_header_value("Authorization"), req.get_header_value("Content-Type"),
                            req.body});
    }
    std::vector<Recorded> entries() const {
        std::lock_guard lock(mutex_);
        return entries_;
    }

private:
    mutable std::mutex mutex_;
    std::vector<Recorded> entries_;
};

} // namespace testing
