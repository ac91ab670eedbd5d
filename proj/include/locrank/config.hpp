#pragma once

#include "locrank/agent.hpp"
#include "locrank/chat.hpp"
#include "locrank/curation.hpp"
#include "locrank/embedding.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace locrank {

enum class EmbedBackendKind { mock, remote };
enum class ChatBackendKind { scripted, remote };

struct RunConfig {
    EmbedBackendKind embed_backend = EmbedBackendKind::mock;
    std::string embed_url;
    std::string embed_model = "text-embedding-3-small";
    std::filesystem::path cache_path;

    ChatBackendKind chat_backend = ChatBackendKind::scripted;
    std::string chat_url;
    std::string chat_model = "gpt-4o-mini";
    std::filesystem::path chat_script;

    std::string api_key;
    int timeout_seconds = 60;
    int retry_attempts = 3;

    std::size_t k = 10;
    bool rerank = false;
    bool reformulate = false;
    int reformulations = 5;
    AgentConfig agent;
    CurationOptions curation;
    std::uint64_t seed = 42;
    unsigned jobs = 1;
};

/// Flat "section.key" → raw value map. Accepts `key = value` lines, `[section]`
/// headers, '#' comments and double-quoted strings with \" \\ \n \t escapes.
std::map<std::string, std::string> parse_key_values(std::string_view text);

/// Throws Error{config} for unknown keys and unparsable values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);
void apply_settings(RunConfig& config, const std::map<std::string, std::string>& settings);

using EnvLookup = std::function<std::optional<std::string>(const char*)>;
EnvLookup process_env();

/// LOCRANK_EMBED_URL, LOCRANK_CHAT_URL and LOCRANK_API_KEY.
void apply_env(RunConfig& config, const EnvLookup& env);

/// Defaults, then the config file, then `flags`, then the environment.
RunConfig resolve_config(const std::optional<std::filesystem::path>& config_file,
                         const std::map<std::string, std::string>& flags, const EnvLookup& env);

/// Throws Error{config} when a remote backend has no URL and similar mistakes.
void validate_config(const RunConfig& config);

/// Live backends for one command run.
struct Backends {
    std::unique_ptr<EmbeddingBackend> embedder;
    std::unique_ptr<EmbeddingCache> cache;
    std::unique_ptr<ChatBackend> agent_chat;
    std::unique_ptr<ChatBackend> rerank_chat;
    std::unique_ptr<ChatBackend> reformulate_chat;
    Diagnostics* diagnostics = nullptr;

    AgentBackends agent_backends();
    /// Writes the cache back when a cache path is configured.
    void persist(const RunConfig& config) const;
};

/// Scripted chat file: {"agent":[…], "rerank":"identity"|"reverse"|{"prefer":[…]}|[…],
/// "reformulate":[…]}. Missing roles default to an empty script, except
/// rerank which defaults to identity.
Backends make_backends(const RunConfig& config, Diagnostics* diagnostics = nullptr);

} // namespace locrank
