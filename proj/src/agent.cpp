#include "locrank/agent.hpp"
#include "locrank/text.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

namespace locrank {

namespace {

constexpr std::string_view kAgentSystemPrompt = R"(You are an intelligent assistant specializing in software issue localization. Your primary goal is to identify up to 10 unique code functions from a given codebase that are most likely to require modification to fix a provided software issue. You must operate by iteratively using the search tool at your disposal over a series of steps.

### Rules and Guidelines

1. Understand the Issue carefully.
2. Iterative Search: perform sequential `search` calls; number of rounds is configurable.
3. Review & Reflect after each `search`: use results to inform your next query. Avoid duplicates.
4. Explain & Reformulate: explain relevance for new functions, then reason about how to refine the next query.
5. Termination: once coverage is sufficient or rounds are done, call `finish` with up to 10 functions.

### Available Tools

"name": "search"
"description": "Searches the codebase for functions relevant to the query. Returns a list of candidate functions found based on the description of the issue passed to the tool."
"parameters": "issue_description"

"name": "finish"
"description": "Call this tool when you are confident you have identified all the top relevant functions."
"parameters": null

### Helpful Pointers

1.  Use `search` with complementary angles across rounds.
2.  Prefer high-coverage, low-duplicate results.
3.  After each `search`, explain why each new function is relevant.
4.  Then justify your query reformulation before making the next call.
5.  Use `finish` when confident.

### Expected Response Format

Your response MUST follow this format:

THOUGHT: Summarize what you just learned from the latest search results. For EACH newly added function, provide a brief relevance explanation describing why it may relate to the issue description.

REFORMULATION: Explain how you will adjust the next search query to improve coverage/diversity and reduce duplicates.

ACTION:
{"name": "...", "arguments": { ... }})";

constexpr std::string_view kReprompt =
    "Your previous response could not be processed ({error}). Respond again using exactly the "
    "THOUGHT:, REFORMULATION: and ACTION: sections, with ACTION followed by a JSON object such as "
    "{\"name\": \"search\", \"arguments\": {\"issue_description\": \"...\"}} or "
    "{\"name\": \"finish\", \"arguments\": null}.";

enum class Section { none, thought, reformulation, action };

std::optional<std::pair<Section, std::size_t>> section_marker(std::string_view line) {
    const auto stripped = line.substr(std::min(line.size(), line.find_first_not_of(" \t*#")));
    static constexpr std::pair<std::string_view, Section> markers[] = {
        {"THOUGHT", Section::thought},
        {"REFORMULATION", Section::reformulation},
        {"ACTION", Section::action},
    };
    for (const auto& [name, section] : markers) {
        if (!stripped.starts_with(name)) {
            continue;
        }
        auto rest = stripped.substr(name.size());
        const auto colon = rest.find_first_not_of(" \t*");
        if (colon != std::string_view::npos && rest[colon] == ':') {
            auto offset = static_cast<std::size_t>(stripped.data() - line.data()) + name.size() + colon + 1;
            while (offset < line.size() && line[offset] == '*') {
                ++offset;
            }
            return std::pair{section, offset};
        }
    }
    return std::nullopt;
}

// Extent of the first balanced {...} object, honoring JSON string escapes.
std::optional<std::string_view> first_json_object(std::string_view text) {
    const auto open = text.find('{');
    if (open == std::string_view::npos) {
        return std::nullopt;
    }
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}' && --depth == 0) {
            return text.substr(open, i - open + 1);
        }
    }
    return std::nullopt;
}

std::vector<std::string> leading_lines(std::string_view text, std::size_t count) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (lines.size() < count && pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            lines.emplace_back(text.substr(pos));
            break;
        }
        lines.emplace_back(text.substr(pos, end - pos));
        pos = end + 1;
    }
    return lines;
}

std::string render_observation(const std::string& query, const std::vector<std::string>& ids,
                               const std::vector<std::string>& new_ids, const Corpus& corpus,
                               const AgentConfig& config, int turns_left) {
    std::string out = "Search results for: " + query + "\n\n";
    std::unordered_set<std::string> fresh(new_ids.begin(), new_ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto& unit = slice_unit(corpus, ids[i]);
        out += std::to_string(i + 1) + ". " + unit.id + (fresh.contains(unit.id) ? " (new)" : "") + "\n";
        out += "   name: " + unit.qualified_name + "\n";
        out += "   path: " + unit.path + ":" + std::to_string(unit.start_line) + "-" +
               std::to_string(unit.end_line) + "\n";
        out += "```\n";
        for (const auto& line : leading_lines(unit.text, config.observation_lines)) {
            out += line;
            out.push_back('\n');
        }
        out += "```\n\n";
    }
    out += std::to_string(new_ids.size()) + " new function(s) added to memory. Remaining search rounds: " +
           std::to_string(std::max(0, turns_left)) + ".";
    return out;
}

RankedList pool_as_ranked_list(const std::string& query_id, const std::vector<std::string>& ids) {
    // Rank-derived scores keep the list non-increasing in pool order.
    RankedList list{query_id, {}, ids.size()};
    const auto n = static_cast<double>(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        list.items.push_back(ScoredId{ids[i], (n - static_cast<double>(i)) / n});
    }
    return list;
}

RankedList head(RankedList list, std::size_t k) {
    if (list.items.size() > k) {
        list.items.resize(k);
    }
    list.k = k;
    return list;
}

} // namespace

void AgentConfig::validate() const {
    if (max_turns < 1) {
        throw Error(ErrorCode::config, "max_turns must be >= 1");
    }
    if (search_k == 0 || retrieve_k == 0 || final_k == 0) {
        throw Error(ErrorCode::config, "search_k, retrieve_k and final_k must be positive");
    }
}

std::string AgentAction::issue_description() const {
    if (name != ToolName::search) {
        return {};
    }
    return arguments.at("issue_description").get<std::string>();
}

AgentResponse parse_agent_response(std::string_view text) {
    AgentResponse out;
    std::string action_body;
    bool saw_action = false;
    Section current = Section::none;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        std::string_view content = line;
        if (auto marker = section_marker(line); marker && !(current == Section::action && saw_action &&
                                                            marker->first != Section::action)) {
            current = marker->first;
            content = line.substr(marker->second);
            if (current == Section::action) {
                if (saw_action) {
                    break;  // only the first ACTION counts
                }
                saw_action = true;
            }
        }
        std::string* target = nullptr;
        switch (current) {
        case Section::thought: target = &out.thought; break;
        case Section::reformulation: target = &out.reformulation; break;
        case Section::action: target = &action_body; break;
        case Section::none: break;
        }
        if (target != nullptr) {
            if (!target->empty()) {
                target->push_back('\n');
            }
            target->append(content);
        }
    }
    out.thought = std::string(trim(out.thought));
    out.reformulation = std::string(trim(out.reformulation));

    if (!saw_action) {
        throw Error(ErrorCode::malformed_response, "response has no ACTION section");
    }
    const auto object_text = first_json_object(action_body);
    if (!object_text) {
        throw Error(ErrorCode::malformed_response, "ACTION is not followed by a JSON object");
    }
    nlohmann::json action;
    try {
        action = nlohmann::json::parse(*object_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::malformed_response, std::string("ACTION JSON is invalid: ") + e.what());
    }
    if (!action.is_object() || !action.contains("name") || !action["name"].is_string()) {
        throw Error(ErrorCode::malformed_response, "ACTION JSON lacks a string \"name\"");
    }
    const auto name = action["name"].get<std::string>();
    out.action.arguments = action.contains("arguments") ? action["arguments"] : nlohmann::json();
    if (name == "finish") {
        out.action.name = ToolName::finish;
    } else if (name == "search") {
        out.action.name = ToolName::search;
        const auto& args = out.action.arguments;
        if (!args.is_object() || !args.contains("issue_description") || !args["issue_description"].is_string() ||
            trim(args["issue_description"].get<std::string>()).empty()) {
            throw Error(ErrorCode::invalid_arguments, "search requires a non-empty issue_description");
        }
    } else {
        throw Error(ErrorCode::unknown_tool, "unknown tool '" + name + "'");
    }
    return out;
}

std::string_view stop_reason_name(StopReason reason) noexcept {
    switch (reason) {
    case StopReason::running: return "running";
    case StopReason::finish: return "finish";
    case StopReason::max_turns: return "max_turns";
    case StopReason::no_new_ids: return "no_new_ids";
    case StopReason::malformed: return "malformed";
    case StopReason::chat_error: return "chat_error";
    }
    return "unknown";
}

AgentState::AgentState(const Query& issue, const AgentConfig& config) : issue_id_(issue.id) {
    config.validate();
    validate_query(issue);
    conversation.push_back(ChatMessage{"system", std::string(kAgentSystemPrompt)});
    conversation.push_back(ChatMessage{"user", issue.text});
}

std::vector<std::string> AgentState::remember(const std::vector<std::string>& ids) {
    std::vector<std::string> fresh;
    for (const auto& id : ids) {
        if (memory_index_.insert(id).second) {
            memory_.push_back(id);
            fresh.push_back(id);
        }
    }
    return fresh;
}

std::string agent_system_prompt() { return std::string(kAgentSystemPrompt); }

RankedList search_tool(const Query& query, const Corpus& corpus, const AgentConfig& config,
                       AgentBackends& backends, std::size_t keep) {
    auto retrieved = retrieve_topk(query, corpus, backends.embedder, backends.cache, config.retrieve_k,
                                   config.retrieve);
    auto reranked = rerank_sliding(query, retrieved, corpus, backends.rerank_chat, config.sliding,
                                   backends.diagnostics);
    return head(std::move(reranked), keep);
}

RankedList single_pass(const Query& issue, const Corpus& corpus, const AgentConfig& config,
                       AgentBackends& backends) {
    return search_tool(issue, corpus, config, backends, config.final_k);
}

AgentState step(AgentState state, const Corpus& corpus, const AgentConfig& config, AgentBackends& backends) {
    if (state.terminated()) {
        throw Error(ErrorCode::invalid_argument, "step() called on a terminated agent");
    }
    TurnRecord record;
    record.turn = state.turn + 1;

    std::optional<AgentResponse> parsed;
    std::string raw;
    try {
        raw = backends.agent_chat.complete(state.conversation);
    } catch (const std::exception& e) {
        ++state.turn;
        record.error = std::string("chat backend: ") + e.what();
        warn(backends.diagnostics, "agent turn " + std::to_string(record.turn) + " chat call failed: " + e.what());
        state.stop = StopReason::chat_error;
        state.transcript.push_back(std::move(record));
        return state;
    }
    try {
        parsed = parse_agent_response(raw);
        state.conversation.push_back(ChatMessage{"assistant", raw});
    } catch (const Error& first_error) {
        // One re-prompt, then the turn is treated as finish.
        record.reprompted = true;
        state.conversation.push_back(ChatMessage{"assistant", raw});
        std::string reprompt(kReprompt);
        reprompt.replace(reprompt.find("{error}"), 7, first_error.what());
        state.conversation.push_back(ChatMessage{"user", std::move(reprompt)});
        try {
            raw = backends.agent_chat.complete(state.conversation);
            state.conversation.push_back(ChatMessage{"assistant", raw});
            parsed = parse_agent_response(raw);
        } catch (const std::exception& second_error) {
            record.error = second_error.what();
            warn(backends.diagnostics, "agent turn " + std::to_string(record.turn) +
                                           " malformed twice, finishing: " + second_error.what());
        }
    }

    ++state.turn;
    if (!parsed) {
        state.stop = StopReason::malformed;
        state.transcript.push_back(std::move(record));
        return state;
    }

    record.thought = parsed->thought;
    record.reformulation = parsed->reformulation;
    if (parsed->action.name == ToolName::finish) {
        record.action = "finish";
        state.stop = StopReason::finish;
        state.transcript.push_back(std::move(record));
        return state;
    }

    record.action = "search";
    record.query = parsed->action.issue_description();
    state.queries.push_back(record.query);
    const int turns_left = config.max_turns - state.turn;
    try {
        const Query search_query{state.issue_id() + "#turn" + std::to_string(record.turn), record.query};
        const auto results = search_tool(search_query, corpus, config, backends, config.search_k);
        record.result_ids = results.ids();
        record.new_ids = state.remember(record.result_ids);
        state.conversation.push_back(ChatMessage{
            "user", render_observation(record.query, record.result_ids, record.new_ids, corpus, config, turns_left)});
        if (record.new_ids.empty()) {
            state.stop = StopReason::no_new_ids;
        }
    } catch (const std::exception& e) {
        record.error = e.what();
        state.conversation.push_back(ChatMessage{"user", std::string("Search failed: ") + e.what()});
        warn(backends.diagnostics, "agent turn " + std::to_string(record.turn) + " search failed: " + e.what());
    }
    if (!state.terminated() && state.turn >= config.max_turns) {
        state.stop = StopReason::max_turns;
    }
    state.transcript.push_back(std::move(record));
    return state;
}

AgentResult run_agent(const Query& issue, const Corpus& corpus, const AgentConfig& config,
                      AgentBackends& backends) {
    if (corpus.empty()) {
        throw Error(ErrorCode::empty_corpus, "cannot localize against an empty corpus");
    }
    AgentResult result;
    result.state = AgentState(issue, config);
    while (!result.state.terminated()) {
        result.state = step(std::move(result.state), corpus, config, backends);
    }
    if (result.state.memory().empty()) {
        warn(backends.diagnostics, "agent memory empty for '" + issue.id + "', using single-pass result");
        result.ranking = single_pass(issue, corpus, config, backends);
        result.used_fallback = true;
        return result;
    }
    const auto pool = pool_as_ranked_list(issue.id, result.state.memory());
    auto reranked = rerank_sliding(issue, pool, corpus, backends.rerank_chat, config.sliding, backends.diagnostics);
    result.ranking = head(std::move(reranked), config.final_k);
    return result;
}

std::vector<std::string> parse_reformulations(std::string_view reply, int limit) {
    std::vector<std::string> out;
    const auto push = [&](std::string_view q) {
        const auto t = trim(q);
        if (!t.empty() && static_cast<int>(out.size()) < limit) {
            out.emplace_back(t);
        }
    };
    const auto open = reply.find('[');
    const auto close = reply.rfind(']');
    if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
        try {
            const auto j = nlohmann::json::parse(reply.substr(open, close - open + 1));
            if (j.is_array()) {
                for (const auto& item : j) {
                    if (item.is_string()) {
                        push(item.get<std::string>());
                    }
                }
                return out;
            }
        } catch (const nlohmann::json::exception&) {
            // fall through to line mode
        }
    }
    std::size_t pos = 0;
    while (pos <= reply.size()) {
        auto end = reply.find('\n', pos);
        if (end == std::string_view::npos) {
            end = reply.size();
        }
        auto line = trim(reply.substr(pos, end - pos));
        pos = end + 1;
        // Strip list bullets such as "1.", "2)" or "-".
        std::size_t skip = 0;
        while (skip < line.size() && (std::isdigit(static_cast<unsigned char>(line[skip])) != 0)) {
            ++skip;
        }
        if (skip < line.size() && (line[skip] == '.' || line[skip] == ')') && skip > 0) {
            line.remove_prefix(skip + 1);
        } else if (!line.empty() && (line.front() == '-' || line.front() == '*')) {
            line.remove_prefix(1);
        }
        push(line);
    }
    return out;
}

RankedList reformulate_baseline(const Query& issue, const Corpus& corpus, const AgentConfig& config,
                                AgentBackends& backends, ChatBackend& reformulator, int reformulations) {
    if (corpus.empty()) {
        throw Error(ErrorCode::empty_corpus, "cannot localize against an empty corpus");
    }
    validate_query(issue);
    std::vector<std::string> queries{issue.text};
    try {
        const std::vector<ChatMessage> prompt{
            {"system", "You rewrite GitHub issue descriptions into search queries for a code search tool."},
            {"user", "Generate " + std::to_string(reformulations) +
                         " reformulated search queries for the following GitHub issue. Each query should "
                         "describe the faulty behavior from a different angle. Respond with a JSON array of " +
                         std::to_string(reformulations) + " strings and nothing else.\n\n" + issue.text}};
        auto generated = parse_reformulations(reformulator.complete(prompt), reformulations);
        if (static_cast<int>(generated.size()) < reformulations) {
            warn(backends.diagnostics, "reformulator produced " + std::to_string(generated.size()) + " of " +
                                           std::to_string(reformulations) + " queries");
        }
        queries.insert(queries.end(), generated.begin(), generated.end());
    } catch (const std::exception& e) {
        warn(backends.diagnostics, std::string("reformulation failed, using the original query only: ") + e.what());
    }

    std::vector<std::string> pool;
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        try {
            const Query q{issue.id + "#q" + std::to_string(i), queries[i]};
            for (const auto& id : search_tool(q, corpus, config, backends, config.search_k).ids()) {
                if (seen.insert(id).second) {
                    pool.push_back(id);
                }
            }
        } catch (const Error& e) {
            if (i == 0) {
                throw;
            }
            warn(backends.diagnostics, "reformulated query " + std::to_string(i) + " failed: " + e.what());
        }
    }
    if (pool.empty()) {
        return RankedList{issue.id, {}, config.final_k};
    }
    auto reranked = rerank_sliding(issue, pool_as_ranked_list(issue.id, pool), corpus, backends.rerank_chat,
                                   config.sliding, backends.diagnostics);
    return head(std::move(reranked), config.final_k);
}

std::string transcript_to_jsonl(const AgentState& state) {
    std::string out;
    for (const auto& r : state.transcript) {
        nlohmann::ordered_json j;
        j["turn"] = r.turn;
        j["thought"] = r.thought;
        j["reformulation"] = r.reformulation;
        nlohmann::ordered_json action;
        if (r.action.empty()) {
            action = nullptr;
        } else {
            action["name"] = r.action;
            if (r.action == "search") {
                action["arguments"] = {{"issue_description", r.query}};
            } else {
                action["arguments"] = nullptr;
            }
        }
        j["action"] = std::move(action);
        j["result_ids"] = r.result_ids;
        j["new_ids"] = r.new_ids;
        j["reprompted"] = r.reprompted;
        j["error"] = r.error.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.error);
        out += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        out.push_back('\n');
    }
    return out;
}

void save_transcript(const AgentState& state, const std::filesystem::path& path) {
    write_file(path, transcript_to_jsonl(state));
}

} // namespace locrank
