#pragma once

#include "locrank/chat.hpp"
#include "locrank/corpus.hpp"
#include "locrank/retrieval.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace locrank {

inline constexpr std::size_t kMaxWindowSize = 10;
inline constexpr std::size_t kCandidateCharBudget = 6000;
inline constexpr std::string_view kTruncationMarker = "\n... [truncated]";

struct WindowCandidate {
    int ident = 0;  ///< 1-based position in the prompt
    std::string unit_id;
    std::string text;

    bool operator==(const WindowCandidate&) const = default;
};

struct CandidateWindow {
    std::string query_text;
    std::vector<WindowCandidate> candidates;
};

struct RerankPrompt {
    std::string system;
    std::string user;

    std::vector<ChatMessage> messages() const;
};

/// Cuts text over kCandidateCharBudget bytes (on a UTF-8 boundary) and
/// appends kTruncationMarker.
std::string truncate_candidate(std::string_view text);

/// Renders the CodeRanker system/user prompt for 1..10 candidates. Throws
/// Error{invalid_argument} on an empty issue, a bad window size or
/// non-consecutive identifiers.
RerankPrompt build_rerank_prompt(const CandidateWindow& window);

/// Candidate texts recovered from a user prompt built by build_rerank_prompt.
std::vector<std::string> split_rerank_candidates(std::string_view user_prompt);

struct RankingPermutation {
    std::vector<int> order;
};

/// Reads bracketed identifiers ("[2] > [1]") and repairs the result into a
/// permutation of 1..n: later duplicates and out-of-range ids are dropped,
/// missing ids are appended in ascending order. Throws Error{parse} when no
/// valid identifier is present.
RankingPermutation parse_ranking(std::string_view response, int n);

struct SlidingWindowOptions {
    std::size_t window = kMaxWindowSize;
    std::size_t stride = 5;
};

/// One bottom-up pass of overlapping windows. Returns a permutation of the
/// input ids; the i-th output item takes the i-th input score so scores stay
/// non-increasing. A failing window keeps its incoming order and is reported
/// through `diagnostics`.
RankedList rerank_sliding(const Query& query, const RankedList& ranked, const Corpus& corpus,
                          ChatBackend& chat, const SlidingWindowOptions& options = {},
                          Diagnostics* diagnostics = nullptr);

// Scripted rerank responders (offline runs and tests).
std::string identity_ranking(std::size_t n);
std::string reverse_ranking(std::size_t n);
ScriptedChat::Responder identity_ranker();
ScriptedChat::Responder reverse_ranker();
/// Candidates whose text contains any keyword (case-insensitive) move to the
/// front, in window order; the rest keep their order.
ScriptedChat::Responder keyword_ranker(std::vector<std::string> keywords);

struct RerankTrainInstance {
    std::string query;
    std::vector<WindowCandidate> candidates;
    int label = 0;  ///< identifier of the positive candidate

    RerankPrompt prompt() const;
    bool operator==(const RerankTrainInstance&) const = default;
};

struct CandidateText {
    std::string id;
    std::string text;
};

/// Shuffles candidates with a seeded generator and labels the positive with
/// its new identifier. Throws Error{invalid_instance} when the positive is
/// absent, ids repeat, or there are more than ten candidates.
RerankTrainInstance make_rerank_train_instance(std::string_view query, std::string_view positive_id,
                                               std::span<const CandidateText> candidates,
                                               std::uint64_t seed);

/// Uniform Fisher-Yates permutation of 0..n-1 from a seeded mt19937_64, using
/// rejection sampling for the bounded draws.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

// {"query":…, "candidates":[{"ident":int,"id":…,"text":…}], "label":int}
std::string rerank_instance_to_json(const RerankTrainInstance& instance);
RerankTrainInstance rerank_instance_from_json(std::string_view line);

} // namespace locrank
