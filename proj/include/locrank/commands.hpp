#pragma once

#include "locrank/config.hpp"
#include "locrank/curation.hpp"
#include "locrank/eval.hpp"
#include "locrank/retrieval.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace locrank {

namespace fs = std::filesystem;

struct IndexArgs {
    fs::path repo_root;
    fs::path out;
    std::string repo;
    LanguageSet languages = all_languages();
};

/// Extracts and writes the corpus; returns it.
Corpus cmd_index(const IndexArgs& args, const RunConfig& config, Diagnostics* diagnostics);

/// A plain-text issue file; the id defaults to the file stem.
Query load_issue_file(const fs::path& path, std::string id = {});
/// JSONL with at least "query_id" and "query" per line.
std::vector<Query> load_issues(const fs::path& path);

struct LocalizeArgs {
    fs::path corpus;
    std::vector<Query> issues;
    fs::path out;
};

/// Retrieval, optionally followed by reranking or the reformulation baseline.
std::vector<RankedList> cmd_localize(const LocalizeArgs& args, const RunConfig& config, Diagnostics* diagnostics);

struct AgentArgs {
    fs::path corpus;
    std::vector<Query> issues;
    fs::path out;
    /// One file for a single issue; a directory of <query_id>.jsonl otherwise.
    std::optional<fs::path> transcript;
};

std::vector<AgentResult> cmd_agent(const AgentArgs& args, const RunConfig& config, Diagnostics* diagnostics);

struct CurateArgs {
    fs::path pr_records;
    /// Snapshots at <repos_dir>/<repo>/<base_commit>/ (a source tree) or
    /// <repos_dir>/<repo>/<base_commit>.jsonl (a saved corpus).
    fs::path repos_dir;
    fs::path out_contrastive;
    fs::path out_rerank;
    std::optional<fs::path> repo_meta;
    std::optional<Language> language;
    std::optional<Timestamp> now;
    std::optional<fs::path> table;
};

CurationOutput cmd_curate(const CurateArgs& args, const RunConfig& config, Diagnostics* diagnostics);

struct EvalArgs {
    fs::path predictions;
    fs::path instances;
    fs::path out;
    std::optional<fs::path> table;
    std::optional<fs::path> csv;
    /// Enables the lexical/semantic overlap strata.
    std::optional<fs::path> corpus;
    std::vector<std::size_t> ks{5, 10};
};

EvalReport cmd_eval(const EvalArgs& args, const RunConfig& config, Diagnostics* diagnostics);

} // namespace locrank
