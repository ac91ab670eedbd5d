#pragma once

#include "locrank/corpus.hpp"
#include "locrank/embedding.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace locrank {

struct Query {
    std::string id;
    std::string text;

    bool operator==(const Query&) const = default;
};

struct ScoredId {
    std::string id;
    double score = 0.0;

    bool operator==(const ScoredId&) const = default;
};

/// Candidates ordered by non-increasing score; ties by ascending id.
struct RankedList {
    std::string query_id;
    std::vector<ScoredId> items;
    std::size_t k = 0;

    std::vector<std::string> ids() const;
    bool operator==(const RankedList&) const = default;
};

/// Strict-weak order used everywhere rankings are built: higher score first,
/// then ascending id.
inline bool ranks_before(const ScoredId& a, const ScoredId& b) noexcept {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    return a.id < b.id;
}

struct RetrieveOptions {
    std::size_t max_query_chars = 0;  ///< 0 keeps the full issue text
    std::string query_prefix;         ///< optional instruction prefix, none by default
    unsigned jobs = 1;
    EmbedOptions embed;
};

/// Throws Error{invalid_argument} when the trimmed text is empty.
void validate_query(const Query& query);

/// Embedding of the issue text after truncation and prefixing.
EmbeddingVector embed_query(const Query& query, EmbeddingBackend& backend, const RetrieveOptions& options = {});

/// Cosine of every unit against `query_vector`, in full ranking order.
/// Unit vectors come from (and are added to) `cache`.
std::vector<ScoredId> score_corpus(const EmbeddingVector& query_vector, const Corpus& corpus,
                                   EmbeddingBackend& backend, EmbeddingCache& cache,
                                   const RetrieveOptions& options = {});

/// Exact top-k by cosine similarity. Throws Error{empty_corpus} on an empty
/// corpus and Error{invalid_argument} when k is 0.
RankedList retrieve_topk(const Query& query, const Corpus& corpus, EmbeddingBackend& backend,
                         EmbeddingCache& cache, std::size_t k, const RetrieveOptions& options = {});

// Prediction JSONL: {"query_id":…, "ranking":[{"id":…, "score":…}]}
std::string prediction_to_json(const RankedList& list);
RankedList prediction_from_json(std::string_view line);
void save_predictions(const std::vector<RankedList>& lists, const std::filesystem::path& path);
std::vector<RankedList> load_predictions(const std::filesystem::path& path);

} // namespace locrank
