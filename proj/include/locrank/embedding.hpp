#pragma once

#include "locrank/corpus.hpp"
#include "locrank/http.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace locrank {

/// Dense embedding. All-zero vectors are allowed (empty mock input) and have
/// cosine 0 with everything.
struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dims() const noexcept { return values.size(); }
    bool is_zero() const noexcept;
    bool operator==(const EmbeddingVector&) const = default;
};

/// Scales to unit L2 norm; the zero vector is returned unchanged.
void l2_normalize(EmbeddingVector& v) noexcept;

/// Cosine similarity clamped to [-1, 1]; 0 when either side is a zero vector.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;

    /// Stable identifier used to partition caches ("mock-fnv256", "remote:<model>").
    virtual std::string id() const = 0;
    virtual std::size_t dims() const = 0;

    /// One vector per input, same order. Must be callable concurrently.
    virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;
};

/// Deterministic bag-of-tokens embedder: lowercase, split on non-alphanumeric
/// runs, FNV-1a 64 of each token modulo 256 as bucket, L2-normalize counts.
class MockEmbedder final : public EmbeddingBackend {
public:
    static constexpr std::size_t kDims = 256;

    std::string id() const override { return "mock-fnv256"; }
    std::size_t dims() const override { return kDims; }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

    static EmbeddingVector embed_text(std::string_view text);
};

// JSON-over-HTTP embeddings wire format.
std::string encode_embedding_request(std::string_view model, std::span<const std::string> inputs);
// Re-orders by "index" and checks completeness and constant dimensionality.
// Vectors are returned as sent; normalization is the caller's job.
std::vector<EmbeddingVector> decode_embedding_response(std::string_view body, std::size_t expected_count);

class RemoteEmbedder final : public EmbeddingBackend {
public:
    RemoteEmbedder(std::shared_ptr<HttpTransport> transport, std::string model,
                   RetryPolicy retry = {});

    std::string id() const override { return "remote:" + model_; }
    // Unknown (0) until the first response arrives.
    std::size_t dims() const override { return dims_.load(); }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

private:
    std::shared_ptr<HttpTransport> transport_;
    std::string model_;
    RetryPolicy retry_;
    std::atomic<std::size_t> dims_{0};
};

struct EmbedOptions {
    std::size_t batch_size = 32;
};

/// Embeds `texts` in batches of options.batch_size. Throws
/// Error{invalid_argument} on an empty list and Error{protocol} when the
/// backend returns the wrong count or mixed dimensions.
std::vector<EmbeddingVector> embed(EmbeddingBackend& backend, std::span<const std::string> texts,
                                   const EmbedOptions& options = {});

/// Content key for cache lookups.
std::string content_hash(std::string_view text);

/// Embeddings keyed by content hash, partitioned by backend id. Inserts are
/// serialized; readers see a consistent snapshot.
class EmbeddingCache {
public:
    explicit EmbeddingCache(std::string backend_id) : backend_id_(std::move(backend_id)) {}

    EmbeddingCache(const EmbeddingCache& other);
    EmbeddingCache& operator=(const EmbeddingCache& other);

    const std::string& backend_id() const noexcept { return backend_id_; }
    std::size_t size() const;
    bool contains(const std::string& key) const;
    std::optional<EmbeddingVector> get(const std::string& key) const;
    void put(const std::string& key, EmbeddingVector vector);

    /// Runs `fn(entries)` under a shared lock.
    void read(const std::function<void(const std::unordered_map<std::string, EmbeddingVector>&)>& fn) const;

    /// Binary file with entries in key order.
    void save(const std::filesystem::path& path) const;
    /// Throws Error{config} if the file belongs to another backend.
    static EmbeddingCache load(const std::filesystem::path& path, const std::string& backend_id);
    /// Loads `path` when it exists, else returns an empty cache.
    static EmbeddingCache load_or_empty(const std::filesystem::path& path, const std::string& backend_id);

private:
    std::string backend_id_;
    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, EmbeddingVector> entries_;
};

struct WarmOptions {
    EmbedOptions embed;
    /// Called after every committed batch, e.g. to persist partial progress.
    std::function<void(const EmbeddingCache&)> on_batch;
};

/// Ensures every unit text has a cache entry. Idempotent: a warm cache issues
/// no backend calls. On backend failure the entries committed so far remain.
void warm_cache(EmbeddingBackend& backend, const Corpus& corpus, EmbeddingCache& cache,
                const WarmOptions& options = {});

/// Vectors for `texts`, served from the cache and filling misses through the backend.
std::vector<EmbeddingVector> embed_cached(EmbeddingBackend& backend, EmbeddingCache& cache,
                                          std::span<const std::string> texts,
                                          const EmbedOptions& options = {});

} // namespace locrank
