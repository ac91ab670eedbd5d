#pragma once

#include "locrank/corpus.hpp"
#include "locrank/embedding.hpp"
#include "locrank/rerank.hpp"

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace locrank {

using Timestamp = std::chrono::sys_seconds;

/// "YYYY-MM-DD" or "YYYY-MM-DDTHH:MM:SS[Z]" (UTC). Throws Error{parse}.
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);

struct RepoMeta {
    std::string name;
    long long stars = 0;
    std::map<Language, double> language_fractions;
    Timestamp last_commit{};
};

struct RepoFilter {
    double min_language_fraction = 0.40;  ///< inclusive
    long long stars_above = 1000;         ///< exclusive
    std::chrono::days max_inactivity{183};
};

/// Keeps popular, active repositories written mostly in `target`.
std::vector<RepoMeta> filter_repos(std::span<const RepoMeta> metas, Language target, Timestamp now,
                                   const RepoFilter& filter = {});

RepoMeta repo_meta_from_json(std::string_view line);
std::vector<RepoMeta> load_repo_metas(const std::filesystem::path& path);

struct PrRecord {
    std::string repo;
    long long pr = 0;
    std::string issue_title;
    std::string issue_body;
    std::string base_commit;
    std::vector<std::string> changed_files;
    std::string diff;  ///< unified diff against base_commit
};

PrRecord pr_record_from_json(std::string_view line);
std::vector<PrRecord> load_pr_records(const std::filesystem::path& path);

/// A contiguous run of changed lines on the pre-fix side of a diff. Pure
/// insertions are anchored after line `old_begin` (0 = top of file).
struct ChangeBlock {
    std::string path;
    int old_begin = 0;
    int old_end = 0;
    bool insertion = false;

    bool operator==(const ChangeBlock&) const = default;
};

std::vector<ChangeBlock> parse_unified_diff(std::string_view diff);

/// Distinct file paths on either side of a diff, in order of appearance.
std::vector<std::string> diff_paths(std::string_view diff);

/// True when a change block touches the unit's line span.
bool block_touches(const ChangeBlock& block, const CodeUnit& unit) noexcept;

/// A path segment equal to or containing "test" or "spec" (case-insensitive).
bool is_test_path(std::string_view path);

struct IssueInstance {
    std::string query;
    std::string repo;
    long long pr = 0;
    std::vector<std::string> positive_ids;  ///< corpus order
    std::string snapshot_ref;
};

/// Pre-fix corpus for (repo, base_commit); nullptr when unavailable.
using SnapshotLookup = std::function<const Corpus*(const std::string& repo, const std::string& base_commit)>;

/// Keeps PRs that modify a test path; positives are the snapshot units
/// touched by non-test change blocks. Output sorted by (repo, pr).
std::vector<IssueInstance> build_issue_instances(std::span<const PrRecord> records, const SnapshotLookup& snapshots,
                                                 Diagnostics* diagnostics = nullptr);

struct ContrastiveInstance {
    std::string query;
    std::string positive_id;
    std::vector<std::string> negative_ids;  ///< most to least similar
    std::string repo;

    bool operator==(const ContrastiveInstance&) const = default;
};

std::string contrastive_to_json(const ContrastiveInstance& instance);
ContrastiveInstance contrastive_from_json(std::string_view line);

/// 1-based rank of every unit for `query_text` over the whole corpus.
std::map<std::string, std::size_t> rank_positions(std::string_view query_text, const Corpus& corpus,
                                                  EmbeddingBackend& backend, EmbeddingCache& cache);

/// Top `count` non-positive units by cosine to the query, most similar first.
std::vector<std::string> mine_hard_negatives(std::string_view query_text, const Corpus& corpus,
                                             std::span<const std::string> positive_ids, std::size_t count,
                                             EmbeddingBackend& backend, EmbeddingCache& cache,
                                             Diagnostics* diagnostics = nullptr);

struct CurationOptions {
    std::size_t top_n = 40;
    std::size_t negatives = 15;
    std::uint64_t seed = 42;
};

struct ConsistencyResult {
    bool kept = false;
    std::map<std::string, std::size_t> positive_ranks;
    std::vector<ContrastiveInstance> instances;  ///< one per positive ranked within top_n
};

ConsistencyResult consistency_filter(const IssueInstance& instance, const Corpus& corpus,
                                     EmbeddingBackend& backend, EmbeddingCache& cache,
                                     const CurationOptions& options = {}, Diagnostics* diagnostics = nullptr);

struct LanguageStats {
    Language language = Language::python;
    std::size_t repos = 0;
    std::size_t prs = 0;
    std::size_t instances = 0;
};

struct CurationOutput {
    std::vector<IssueInstance> issues;
    std::vector<ContrastiveInstance> contrastive;
    std::vector<RerankTrainInstance> rerank;
    std::vector<LanguageStats> table;
};

/// Full pipeline: instance construction, consistency filtering, hard-negative
/// mining and listwise training instances (positive plus up to nine negatives).
CurationOutput curate(std::span<const PrRecord> records, const SnapshotLookup& snapshots,
                      EmbeddingBackend& backend, EmbeddingCache& cache,
                      const CurationOptions& options = {}, Diagnostics* diagnostics = nullptr);

/// Plain-text table with columns language, #repos, #PRs, #instances.
std::string render_language_table(std::span<const LanguageStats> rows);

} // namespace locrank
