#pragma once

#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace locrank {

enum class ErrorCode {
    io,
    not_found,
    invalid_argument,
    parse,
    protocol,
    transport,
    empty_corpus,
    invalid_instance,
    malformed_response,
    unknown_tool,
    invalid_arguments,
    input,
    config,
    usage,
};

std::string_view error_code_name(ErrorCode code) noexcept;

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    bool retryable() const noexcept { return code_ == ErrorCode::transport; }

private:
    ErrorCode code_;
};

// Collects non-fatal warnings (skipped files, fallbacks, repaired outputs).
// Safe to share between worker threads.
class Diagnostics {
public:
    void warn(std::string message);
    std::vector<std::string> warnings() const;
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::vector<std::string> warnings_;
};

// Forwards to `sink` when non-null.
inline void warn(Diagnostics* sink, std::string message) {
    if (sink != nullptr) {
        sink->warn(std::move(message));
    }
}

} // namespace locrank
