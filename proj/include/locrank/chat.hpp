#pragma once

#include "locrank/http.hpp"

#include <atomic>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace locrank {

struct ChatMessage {
    std::string role;  ///< "system" | "user" | "assistant"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// Returns the assistant message content. Throws Error on failure.
    virtual std::string complete(std::span<const ChatMessage> messages) = 0;
};

// JSON-over-HTTP chat wire format.
std::string encode_chat_request(std::string_view model, std::span<const ChatMessage> messages,
                                double temperature = 0.0);
/// choices[0].message.content; Error{protocol} when absent.
std::string decode_chat_response(std::string_view body);

class RemoteChat final : public ChatBackend {
public:
    RemoteChat(std::shared_ptr<HttpTransport> transport, std::string model, RetryPolicy retry = {});
    std::string complete(std::span<const ChatMessage> messages) override;

private:
    std::shared_ptr<HttpTransport> transport_;
    std::string model_;
    RetryPolicy retry_;
};

/// Test/offline backend driven by a callback; counts calls and keeps the
/// prompts it received.
class ScriptedChat final : public ChatBackend {
public:
    using Responder = std::function<std::string(std::span<const ChatMessage>)>;

    explicit ScriptedChat(Responder responder) : responder_(std::move(responder)) {}

    /// Replays `responses` in order; throws Error{transport} once exhausted.
    static std::unique_ptr<ScriptedChat> sequence(std::vector<std::string> responses);

    std::string complete(std::span<const ChatMessage> messages) override;

    std::size_t calls() const noexcept { return calls_.load(); }
    std::vector<std::vector<ChatMessage>> history() const;

private:
    Responder responder_;
    std::atomic<std::size_t> calls_{0};
    mutable std::mutex mutex_;
    std::vector<std::vector<ChatMessage>> history_;
};

} // namespace locrank
