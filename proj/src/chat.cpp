#include "locrank/chat.hpp"
#include "locrank/error.hpp"

#include <nlohmann/json.hpp>

namespace locrank {

std::string encode_chat_request(std::string_view model, std::span<const ChatMessage> messages,
                                double temperature) {
    nlohmann::ordered_json j;
    j["model"] = model;
    j["messages"] = nlohmann::ordered_json::array();
    for (const auto& m : messages) {
        nlohmann::ordered_json msg;
        msg["role"] = m.role;
        msg["content"] = m.content;
        j["messages"].push_back(std::move(msg));
    }
    j["temperature"] = temperature;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string decode_chat_response(std::string_view body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::protocol, std::string("chat response is not JSON: ") + e.what());
    }
    const auto* choices = j.contains("choices") ? &j["choices"] : nullptr;
    if (choices == nullptr || !choices->is_array() || choices->empty()) {
        throw Error(ErrorCode::protocol, "chat response has no choices");
    }
    const auto& first = (*choices)[0];
    if (!first.contains("message") || !first["message"].contains("content") ||
        !first["message"]["content"].is_string()) {
        throw Error(ErrorCode::protocol, "chat response choice lacks message.content");
    }
    return first["message"]["content"].get<std::string>();
}

RemoteChat::RemoteChat(std::shared_ptr<HttpTransport> transport, std::string model, RetryPolicy retry)
    : transport_(std::move(transport)), model_(std::move(model)), retry_(retry) {}

std::string RemoteChat::complete(std::span<const ChatMessage> messages) {
    const auto response = post_with_retry(*transport_, "/chat/completions",
                                          encode_chat_request(model_, messages), retry_);
    return decode_chat_response(response.body);
}

std::unique_ptr<ScriptedChat> ScriptedChat::sequence(std::vector<std::string> responses) {
    auto next = std::make_shared<std::size_t>(0);
    auto script = std::make_shared<std::vector<std::string>>(std::move(responses));
    return std::make_unique<ScriptedChat>([next, script](std::span<const ChatMessage>) {
        if (*next >= script->size()) {
            throw Error(ErrorCode::transport, "scripted chat exhausted after " +
                                                  std::to_string(script->size()) + " responses");
        }
        return (*script)[(*next)++];
    });
}

std::string ScriptedChat::complete(std::span<const ChatMessage> messages) {
    std::lock_guard lock(mutex_);
    history_.emplace_back(messages.begin(), messages.end());
    ++calls_;
    return responder_(messages);
}

std::vector<std::vector<ChatMessage>> ScriptedChat::history() const {
    std::lock_guard lock(mutex_);
    return history_;
}

} // namespace locrank
