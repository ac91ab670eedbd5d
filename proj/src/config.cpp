#include "locrank/config.hpp"
#include "locrank/http.hpp"
#include "locrank/rerank.hpp"
#include "locrank/text.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdlib>

namespace locrank {

namespace {

std::string unquote(std::string_view raw, int line_no) {
    if (raw.size() < 2 || raw.back() != '"') {
        throw Error(ErrorCode::config, "line " + std::to_string(line_no) + ": unterminated string");
    }
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
        char c = raw[i];
        if (c == '\\' && i + 2 < raw.size()) {
            const char e = raw[++i];
            switch (e) {
            case 'n': c = '\n'; break;
            case 't': c = '\t'; break;
            case '"': c = '"'; break;
            case '\\': c = '\\'; break;
            default:
                throw Error(ErrorCode::config, "line " + std::to_string(line_no) + ": bad escape");
            }
        }
        out.push_back(c);
    }
    return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw Error(ErrorCode::config, std::string(key) + ": expected a number, got '" + std::string(value) + "'");
    }
    return out;
}

template <typename T>
T parse_positive(std::string_view key, std::string_view value) {
    const auto v = parse_number<T>(key, value);
    if (v <= 0) {
        throw Error(ErrorCode::config, std::string(key) + ": must be positive");
    }
    return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes") {
        return true;
    }
    if (value == "false" || value == "0" || value == "no") {
        return false;
    }
    throw Error(ErrorCode::config, std::string(key) + ": expected true or false");
}

std::unique_ptr<ChatBackend> scripted_role(const nlohmann::json& script, const char* role) {
    if (!script.contains(role)) {
        if (std::string_view(role) == "rerank") {
            return std::make_unique<ScriptedChat>(identity_ranker());
        }
        return ScriptedChat::sequence({});
    }
    const auto& spec = script.at(role);
    if (spec.is_string()) {
        const auto name = spec.get<std::string>();
        if (name == "identity") {
            return std::make_unique<ScriptedChat>(identity_ranker());
        }
        if (name == "reverse") {
            return std::make_unique<ScriptedChat>(reverse_ranker());
        }
        throw Error(ErrorCode::config, std::string("chat script ") + role + ": unknown responder '" + name + "'");
    }
    if (spec.is_object() && spec.contains("prefer")) {
        return std::make_unique<ScriptedChat>(keyword_ranker(spec.at("prefer").get<std::vector<std::string>>()));
    }
    if (spec.is_array()) {
        return ScriptedChat::sequence(spec.get<std::vector<std::string>>());
    }
    throw Error(ErrorCode::config, std::string("chat script ") + role + ": unsupported value");
}

} // namespace

std::map<std::string, std::string> parse_key_values(std::string_view text) {
    std::map<std::string, std::string> out;
    std::string section;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        ++line_no;
        auto line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        if (line.empty() || line.front() == '#') {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw Error(ErrorCode::config, "line " + std::to_string(line_no) + ": bad section header");
            }
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::config, "line " + std::to_string(line_no) + ": expected key = value");
        }
        const auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw Error(ErrorCode::config, "line " + std::to_string(line_no) + ": empty key");
        }
        std::string parsed;
        if (!value.empty() && value.front() == '"') {
            // A trailing comment may follow the closing quote.
            std::size_t close = 1;
            while (close < value.size() && (value[close] != '"' || value[close - 1] == '\\')) {
                ++close;
            }
            if (close >= value.size()) {
                throw Error(ErrorCode::config, "line " + std::to_string(line_no) + ": unterminated string");
            }
            const auto rest = trim(value.substr(close + 1));
            if (!rest.empty() && rest.front() != '#') {
                throw Error(ErrorCode::config, "line " + std::to_string(line_no) + ": text after string");
            }
            parsed = unquote(value.substr(0, close + 1), line_no);
        } else {
            if (const auto hash = value.find('#'); hash != std::string_view::npos) {
                value = trim(value.substr(0, hash));
            }
            parsed = std::string(value);
        }
        out[section.empty() ? std::string(key) : section + "." + std::string(key)] = std::move(parsed);
    }
    return out;
}

void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
    if (key == "embed.backend") {
        if (value == "mock") {
            c.embed_backend = EmbedBackendKind::mock;
        } else if (value == "remote") {
            c.embed_backend = EmbedBackendKind::remote;
        } else {
            throw Error(ErrorCode::config, "embed.backend must be mock or remote");
        }
    } else if (key == "embed.url") {
        c.embed_url = value;
    } else if (key == "embed.model") {
        c.embed_model = value;
    } else if (key == "embed.batch_size") {
        c.agent.retrieve.embed.batch_size = parse_positive<std::size_t>(key, value);
    } else if (key == "embed.cache") {
        c.cache_path = std::string(value);
    } else if (key == "chat.backend") {
        if (value == "scripted") {
            c.chat_backend = ChatBackendKind::scripted;
        } else if (value == "remote") {
            c.chat_backend = ChatBackendKind::remote;
        } else {
            throw Error(ErrorCode::config, "chat.backend must be scripted or remote");
        }
    } else if (key == "chat.url") {
        c.chat_url = value;
    } else if (key == "chat.model") {
        c.chat_model = value;
    } else if (key == "chat.script") {
        c.chat_script = std::string(value);
    } else if (key == "api_key") {
        c.api_key = value;
    } else if (key == "http.timeout_seconds") {
        c.timeout_seconds = parse_positive<int>(key, value);
    } else if (key == "http.retry_attempts") {
        c.retry_attempts = parse_positive<int>(key, value);
    } else if (key == "retrieve.k") {
        c.k = parse_positive<std::size_t>(key, value);
    } else if (key == "retrieve.depth") {
        c.agent.retrieve_k = parse_positive<std::size_t>(key, value);
    } else if (key == "retrieve.max_query_chars") {
        c.agent.retrieve.max_query_chars = parse_number<std::size_t>(key, value);
    } else if (key == "retrieve.query_prefix") {
        c.agent.retrieve.query_prefix = value;
    } else if (key == "retrieve.rerank") {
        c.rerank = parse_bool(key, value);
    } else if (key == "retrieve.reformulate") {
        c.reformulate = parse_bool(key, value);
    } else if (key == "retrieve.reformulations") {
        c.reformulations = parse_positive<int>(key, value);
    } else if (key == "rerank.window") {
        const auto w = parse_positive<std::size_t>(key, value);
        if (w < 2 || w > kMaxWindowSize) {
            throw Error(ErrorCode::config, "rerank.window must be in [2, 10]");
        }
        c.agent.sliding.window = w;
    } else if (key == "rerank.stride") {
        c.agent.sliding.stride = parse_positive<std::size_t>(key, value);
    } else if (key == "agent.max_turns") {
        c.agent.max_turns = parse_positive<int>(key, value);
    } else if (key == "agent.search_k") {
        c.agent.search_k = parse_positive<std::size_t>(key, value);
    } else if (key == "agent.final_k") {
        c.agent.final_k = parse_positive<std::size_t>(key, value);
    } else if (key == "agent.observation_lines") {
        c.agent.observation_lines = parse_number<std::size_t>(key, value);
    } else if (key == "curate.top_n") {
        c.curation.top_n = parse_positive<std::size_t>(key, value);
    } else if (key == "curate.negatives") {
        c.curation.negatives = parse_number<std::size_t>(key, value);
    } else if (key == "seed") {
        c.seed = parse_number<std::uint64_t>(key, value);
        c.curation.seed = c.seed;
    } else if (key == "jobs") {
        c.jobs = parse_positive<unsigned>(key, value);
        c.agent.retrieve.jobs = c.jobs;
    } else {
        throw Error(ErrorCode::config, "unknown setting '" + std::string(key) + "'");
    }
}

void apply_settings(RunConfig& config, const std::map<std::string, std::string>& settings) {
    for (const auto& [key, value] : settings) {
        apply_setting(config, key, value);
    }
}

EnvLookup process_env() {
    return [](const char* name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name)) {
            return std::string(v);
        }
        return std::nullopt;
    };
}

void apply_env(RunConfig& config, const EnvLookup& env) {
    if (auto v = env("LOCRANK_EMBED_URL")) {
        config.embed_url = *v;
    }
    if (auto v = env("LOCRANK_CHAT_URL")) {
        config.chat_url = *v;
    }
    if (auto v = env("LOCRANK_API_KEY")) {
        config.api_key = *v;
    }
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& config_file,
                         const std::map<std::string, std::string>& flags, const EnvLookup& env) {
    RunConfig config;
    if (config_file) {
        apply_settings(config, parse_key_values(read_file(*config_file)));
    }
    apply_settings(config, flags);
    if (env) {
        apply_env(config, env);
    }
    validate_config(config);
    return config;
}

void validate_config(const RunConfig& config) {
    if (config.embed_backend == EmbedBackendKind::remote && config.embed_url.empty()) {
        throw Error(ErrorCode::config, "remote embedding backend needs embed.url or LOCRANK_EMBED_URL");
    }
    if (config.chat_backend == ChatBackendKind::remote && config.chat_url.empty()) {
        throw Error(ErrorCode::config, "remote chat backend needs chat.url or LOCRANK_CHAT_URL");
    }
    if (config.agent.sliding.stride >= config.agent.sliding.window) {
        throw Error(ErrorCode::config, "rerank.stride must be smaller than rerank.window");
    }
    config.agent.validate();
}

AgentBackends Backends::agent_backends() {
    return AgentBackends{*embedder, *cache, *agent_chat, *rerank_chat, diagnostics};
}

void Backends::persist(const RunConfig& config) const {
    if (!config.cache_path.empty()) {
        cache->save(config.cache_path);
    }
}

Backends make_backends(const RunConfig& config, Diagnostics* diagnostics) {
    validate_config(config);
    Backends b;
    b.diagnostics = diagnostics;
    const RetryPolicy retry{config.retry_attempts, std::chrono::milliseconds(200)};
    if (config.embed_backend == EmbedBackendKind::mock) {
        b.embedder = std::make_unique<MockEmbedder>();
    } else {
        std::shared_ptr<HttpTransport> transport =
            make_http_transport({config.embed_url, config.api_key, std::chrono::seconds(config.timeout_seconds)});
        b.embedder = std::make_unique<RemoteEmbedder>(std::move(transport), config.embed_model, retry);
    }
    b.cache = std::make_unique<EmbeddingCache>(
        config.cache_path.empty() ? EmbeddingCache(b.embedder->id())
                                  : EmbeddingCache::load_or_empty(config.cache_path, b.embedder->id()));

    if (config.chat_backend == ChatBackendKind::remote) {
        std::shared_ptr<HttpTransport> transport =
            make_http_transport({config.chat_url, config.api_key, std::chrono::seconds(config.timeout_seconds)});
        b.agent_chat = std::make_unique<RemoteChat>(transport, config.chat_model, retry);
        b.rerank_chat = std::make_unique<RemoteChat>(transport, config.chat_model, retry);
        b.reformulate_chat = std::make_unique<RemoteChat>(transport, config.chat_model, retry);
        return b;
    }
    nlohmann::json script = nlohmann::json::object();
    if (!config.chat_script.empty()) {
        try {
            script = nlohmann::json::parse(read_file(config.chat_script));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::config, "chat script: " + std::string(e.what()));
        }
        if (!script.is_object()) {
            throw Error(ErrorCode::config, "chat script must be a JSON object");
        }
    }
    try {
        b.agent_chat = scripted_role(script, "agent");
        b.rerank_chat = scripted_role(script, "rerank");
        b.reformulate_chat = scripted_role(script, "reformulate");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config, "chat script: " + std::string(e.what()));
    }
    return b;
}

} // namespace locrank
