#pragma once

#include "locrank/corpus.hpp"
#include "locrank/embedding.hpp"
#include "locrank/retrieval.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace locrank {

struct BenchInstance {
    Query query;
    std::vector<std::string> gold_ids;
    std::string repo;
    std::string snapshot_ref;

    bool operator==(const BenchInstance&) const = default;
};

// {"query_id","query","gold_ids":[…],"repo","snapshot_ref"}
std::string bench_instance_to_json(const BenchInstance& instance);
BenchInstance bench_instance_from_json(std::string_view line);
std::vector<BenchInstance> load_bench_instances(const std::filesystem::path& path);
void save_bench_instances(std::span<const BenchInstance> instances, const std::filesystem::path& path);

/// True iff every gold id is among the first k predicted ids. Throws
/// Error{invalid_instance} on empty gold and Error{invalid_argument} for k = 0.
bool acc_at_k(const RankedList& prediction, std::span<const std::string> gold, std::size_t k);

using AccMap = std::map<std::size_t, double>;

struct Stratum {
    std::string label;
    std::size_t n = 0;
    AccMap acc_at;

    bool operator==(const Stratum&) const = default;
};

struct EvalReport {
    std::size_t n = 0;
    AccMap acc_at;
    /// stratification name → buckets in display order
    std::map<std::string, std::vector<Stratum>> strata;
};

/// Matches predictions to instances by query id. A missing prediction counts
/// as a miss (with a warning). Duplicate query ids on either side throw
/// Error{input}.
EvalReport evaluate(std::span<const RankedList> predictions, std::span<const BenchInstance> instances,
                    std::span<const std::size_t> ks, Diagnostics* diagnostics = nullptr);
EvalReport evaluate(std::span<const RankedList> predictions, std::span<const BenchInstance> instances,
                    Diagnostics* diagnostics = nullptr);

enum class RougeVariant { set, multiset };

/// Unigram F1 over lowercase alphanumeric tokens, 2|A∩B| / (|A|+|B|).
/// Two empty texts score 1.
double rouge1_f1(std::string_view a, std::string_view b, RougeVariant variant = RougeVariant::set);

enum class OverlapAggregate { max, mean };

struct OverlapOptions {
    RougeVariant rouge = RougeVariant::set;
    OverlapAggregate aggregate = OverlapAggregate::max;
    std::size_t k = 10;
};

struct OverlapScore {
    double lexical = 0.0;
    double semantic = 0.0;
};

/// Lexical and semantic overlap between each query and its gold units.
std::vector<OverlapScore> overlap_scores(std::span<const BenchInstance> instances, const Corpus& corpus,
                                         EmbeddingBackend& backend, EmbeddingCache& cache,
                                         const OverlapOptions& options = {}, Diagnostics* diagnostics = nullptr);

/// Type-7 sample quantile of unsorted `values` (non-empty), p in [0,1].
double quantile(std::vector<double> values, double p);

/// Buckets Q1..Q4 split at the quartiles of `values`; empty buckets are omitted.
/// `hits[i]` is the outcome for instance i.
std::vector<Stratum> quartile_strata(std::span<const double> values, const std::vector<bool>& hits, std::size_t k);

struct OverlapStrata {
    std::vector<Stratum> lexical;
    std::vector<Stratum> semantic;
};

OverlapStrata stratify_by_overlap(std::span<const BenchInstance> instances, std::span<const RankedList> predictions,
                                  const Corpus& corpus, EmbeddingBackend& backend, EmbeddingCache& cache,
                                  const OverlapOptions& options = {}, Diagnostics* diagnostics = nullptr);

/// Buckets "1", "2" and ">=3" by gold-set size; empty buckets are omitted.
std::vector<Stratum> stratify_by_gold_count(std::span<const BenchInstance> instances,
                                            std::span<const RankedList> predictions, std::size_t k = 10);

std::string report_to_json(const EvalReport& report);
std::string render_report_table(const EvalReport& report, std::string_view system_name = "system");
/// stratification,bucket,n,acc@k… rows.
std::string render_strata_csv(const EvalReport& report);

} // namespace locrank
