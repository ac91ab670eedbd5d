#pragma once

#include "locrank/chat.hpp"
#include "locrank/corpus.hpp"
#include "locrank/embedding.hpp"
#include "locrank/rerank.hpp"
#include "locrank/retrieval.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace locrank {

struct AgentConfig {
    int max_turns = 5;
    std::size_t search_k = 10;     ///< ids returned by one search
    std::size_t retrieve_k = 100;  ///< retrieval depth handed to the reranker
    std::size_t final_k = 10;
    std::size_t observation_lines = 30;
    SlidingWindowOptions sliding;
    RetrieveOptions retrieve;

    void validate() const;
};

enum class ToolName { search, finish };

struct AgentAction {
    ToolName name = ToolName::finish;
    nlohmann::json arguments;  ///< null for finish

    /// search only: the non-empty "issue_description" argument.
    std::string issue_description() const;
};

struct AgentResponse {
    std::string thought;
    std::string reformulation;
    AgentAction action;
};

/// Parses the THOUGHT / REFORMULATION / ACTION sections. Throws
/// Error{malformed_response} when ACTION is missing or not a JSON object,
/// Error{unknown_tool} for tools other than search/finish and
/// Error{invalid_arguments} for a search without issue_description.
AgentResponse parse_agent_response(std::string_view text);

enum class StopReason { running, finish, max_turns, no_new_ids, malformed, chat_error };
std::string_view stop_reason_name(StopReason reason) noexcept;

struct TurnRecord {
    int turn = 0;
    std::string thought;
    std::string reformulation;
    std::string action;  ///< "search" | "finish" | "" when the turn was malformed
    std::string query;   ///< search argument
    std::vector<std::string> result_ids;
    std::vector<std::string> new_ids;
    std::string error;
    bool reprompted = false;

    bool operator==(const TurnRecord&) const = default;
};

class AgentState {
public:
    AgentState() = default;
    AgentState(const Query& issue, const AgentConfig& config);

    int turn = 0;
    std::vector<std::string> queries;
    std::vector<TurnRecord> transcript;
    std::vector<ChatMessage> conversation;
    StopReason stop = StopReason::running;

    bool terminated() const noexcept { return stop != StopReason::running; }
    const std::vector<std::string>& memory() const noexcept { return memory_; }
    const std::string& issue_id() const noexcept { return issue_id_; }
    /// Appends unseen ids in order; returns the ones that were new.
    std::vector<std::string> remember(const std::vector<std::string>& ids);

private:
    std::string issue_id_;
    std::vector<std::string> memory_;
    std::unordered_set<std::string> memory_index_;
};

struct AgentBackends {
    EmbeddingBackend& embedder;
    EmbeddingCache& cache;
    ChatBackend& agent_chat;
    ChatBackend& rerank_chat;
    Diagnostics* diagnostics = nullptr;
};

std::string agent_system_prompt();

/// The search tool: retrieve top retrieve_k, rerank, keep the first `keep`.
RankedList search_tool(const Query& query, const Corpus& corpus, const AgentConfig& config,
                       AgentBackends& backends, std::size_t keep);

/// Single-turn pipeline on the original issue (the agent's fallback and the
/// single-query baseline).
RankedList single_pass(const Query& issue, const Corpus& corpus, const AgentConfig& config,
                       AgentBackends& backends);

/// One chat call (plus at most one re-prompt) and, for search, one tool run.
AgentState step(AgentState state, const Corpus& corpus, const AgentConfig& config, AgentBackends& backends);

struct AgentResult {
    RankedList ranking;
    AgentState state;
    bool used_fallback = false;
};

/// Loops until finish, max_turns or a search that adds nothing, then reranks
/// the memory pool from scratch and returns the top final_k.
AgentResult run_agent(const Query& issue, const Corpus& corpus, const AgentConfig& config,
                      AgentBackends& backends);

/// Original issue plus `reformulations` generated queries; union of the
/// per-query tool results reranked once more.
RankedList reformulate_baseline(const Query& issue, const Corpus& corpus, const AgentConfig& config,
                                AgentBackends& backends, ChatBackend& reformulator,
                                int reformulations = 5);

/// Parses generated queries from a reformulator reply (JSON array of strings,
/// or one query per line).
std::vector<std::string> parse_reformulations(std::string_view reply, int limit);

std::string transcript_to_jsonl(const AgentState& state);
void save_transcript(const AgentState& state, const std::filesystem::path& path);

} // namespace locrank
