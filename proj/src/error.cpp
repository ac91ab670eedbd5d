#include "locrank/error.hpp"

namespace locrank {

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::parse: return "parse";
    case ErrorCode::protocol: return "protocol";
    case ErrorCode::transport: return "transport";
    case ErrorCode::empty_corpus: return "empty_corpus";
    case ErrorCode::invalid_instance: return "invalid_instance";
    case ErrorCode::malformed_response: return "malformed_response";
    case ErrorCode::unknown_tool: return "unknown_tool";
    case ErrorCode::invalid_arguments: return "invalid_arguments";
    case ErrorCode::input: return "input";
    case ErrorCode::config: return "config";
    case ErrorCode::usage: return "usage";
    }
    return "unknown";
}

void Diagnostics::warn(std::string message) {
    std::lock_guard lock(mutex_);
    warnings_.push_back(std::move(message));
}

std::vector<std::string> Diagnostics::warnings() const {
    std::lock_guard lock(mutex_);
    return warnings_;
}

std::size_t Diagnostics::size() const {
    std::lock_guard lock(mutex_);
    return warnings_.size();
}

} // namespace locrank
