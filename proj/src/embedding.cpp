#include "locrank/embedding.hpp"
#include "locrank/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <unordered_set>

namespace locrank {

bool EmbeddingVector::is_zero() const noexcept {
    return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

void l2_normalize(EmbeddingVector& v) noexcept {
    double norm_sq = 0.0;
    for (double x : v.values) {
        norm_sq += x * x;
    }
    if (norm_sq == 0.0) {
        return;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : v.values) {
        x *= inv;
    }
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dims() != b.dims()) {
        throw Error(ErrorCode::invalid_argument, "cosine of vectors with different dimensions");
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

EmbeddingVector MockEmbedder::embed_text(std::string_view text) {
    EmbeddingVector v;
    v.values.assign(kDims, 0.0);
    for (const auto& token : word_tokens(text)) {
        v.values[fnv1a64(token) % kDims] += 1.0;
    }
    l2_normalize(v);
    return v;
}

std::vector<EmbeddingVector> MockEmbedder::embed_batch(std::span<const std::string> texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        out.push_back(embed_text(t));
    }
    return out;
}

std::string encode_embedding_request(std::string_view model, std::span<const std::string> inputs) {
    nlohmann::ordered_json j;
    j["model"] = model;
    j["input"] = nlohmann::ordered_json::array();
    for (const auto& s : inputs) {
        j["input"].push_back(s);
    }
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::vector<EmbeddingVector> decode_embedding_response(std::string_view body, std::size_t expected_count) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::protocol, std::string("embedding response is not JSON: ") + e.what());
    }
    if (!j.contains("data") || !j["data"].is_array()) {
        throw Error(ErrorCode::protocol, "embedding response lacks a data array");
    }
    std::vector<std::optional<EmbeddingVector>> slots(expected_count);
    std::size_t dims = 0;
    for (const auto& item : j["data"]) {
        if (!item.contains("index") || !item["index"].is_number_integer() || !item.contains("embedding") ||
            !item["embedding"].is_array()) {
            throw Error(ErrorCode::protocol, "embedding item lacks index/embedding");
        }
        const auto index = item["index"].get<long long>();
        if (index < 0 || static_cast<std::size_t>(index) >= expected_count) {
            throw Error(ErrorCode::protocol, "embedding index out of range: " + std::to_string(index));
        }
        auto& slot = slots[static_cast<std::size_t>(index)];
        if (slot) {
            throw Error(ErrorCode::protocol, "duplicate embedding index " + std::to_string(index));
        }
        EmbeddingVector v;
        v.values.reserve(item["embedding"].size());
        for (const auto& x : item["embedding"]) {
            if (!x.is_number()) {
                throw Error(ErrorCode::protocol, "non-numeric embedding component");
            }
            const double value = x.get<double>();
            if (!std::isfinite(value)) {
                throw Error(ErrorCode::protocol, "non-finite embedding component");
            }
            v.values.push_back(value);
        }
        if (v.values.empty()) {
            throw Error(ErrorCode::protocol, "empty embedding");
        }
        if (dims == 0) {
            dims = v.dims();
        } else if (v.dims() != dims) {
            throw Error(ErrorCode::protocol, "embedding dimension mismatch within batch");
        }
        slot = std::move(v);
    }
    std::vector<EmbeddingVector> out;
    out.reserve(expected_count);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!slots[i]) {
            throw Error(ErrorCode::protocol, "embedding response missing index " + std::to_string(i));
        }
        out.push_back(std::move(*slots[i]));
    }
    return out;
}

RemoteEmbedder::RemoteEmbedder(std::shared_ptr<HttpTransport> transport, std::string model, RetryPolicy retry)
    : transport_(std::move(transport)), model_(std::move(model)), retry_(retry) {}

std::vector<EmbeddingVector> RemoteEmbedder::embed_batch(std::span<const std::string> texts) {
    const auto response = post_with_retry(*transport_, "/embeddings", encode_embedding_request(model_, texts), retry_);
    auto vectors = decode_embedding_response(response.body, texts.size());
    const std::size_t dims = vectors.front().dims();
    std::size_t expected = 0;
    if (!dims_.compare_exchange_strong(expected, dims) && expected != dims) {
        throw Error(ErrorCode::protocol, "embedding dimension changed from " + std::to_string(expected) +
                                             " to " + std::to_string(dims));
    }
    for (auto& v : vectors) {
        l2_normalize(v);
    }
    return vectors;
}

std::vector<EmbeddingVector> embed(EmbeddingBackend& backend, std::span<const std::string> texts,
                                   const EmbedOptions& options) {
    if (texts.empty()) {
        throw Error(ErrorCode::invalid_argument, "embed() needs at least one text");
    }
    const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t begin = 0; begin < texts.size(); begin += batch) {
        const auto chunk = texts.subspan(begin, std::min(batch, texts.size() - begin));
        auto vectors = backend.embed_batch(chunk);
        if (vectors.size() != chunk.size()) {
            throw Error(ErrorCode::protocol, "backend returned " + std::to_string(vectors.size()) +
                                                 " vectors for " + std::to_string(chunk.size()) + " texts");
        }
        for (auto& v : vectors) {
            if (!out.empty() && v.dims() != out.front().dims()) {
                throw Error(ErrorCode::protocol, "embedding dimension mismatch within batch");
            }
            out.push_back(std::move(v));
        }
    }
    return out;
}

std::string content_hash(std::string_view text) {
    // FNV-1a over the bytes plus the length; collisions would need equal length too.
    return hex64(fnv1a64(text)) + "-" + std::to_string(text.size());
}

EmbeddingCache::EmbeddingCache(const EmbeddingCache& other) {
    std::shared_lock lock(other.mutex_);
    backend_id_ = other.backend_id_;
    entries_ = other.entries_;
}

EmbeddingCache& EmbeddingCache::operator=(const EmbeddingCache& other) {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        backend_id_ = other.backend_id_;
        entries_ = other.entries_;
    }
    return *this;
}

std::size_t EmbeddingCache::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

bool EmbeddingCache::contains(const std::string& key) const {
    std::shared_lock lock(mutex_);
    return entries_.contains(key);
}

std::optional<EmbeddingVector> EmbeddingCache::get(const std::string& key) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void EmbeddingCache::put(const std::string& key, EmbeddingVector vector) {
    std::unique_lock lock(mutex_);
    entries_.insert_or_assign(key, std::move(vector));
}

void EmbeddingCache::read(
    const std::function<void(const std::unordered_map<std::string, EmbeddingVector>&)>& fn) const {
    std::shared_lock lock(mutex_);
    fn(entries_);
}

namespace {

constexpr char kCacheMagic[8] = {'L', 'R', 'K', 'C', 'A', 'C', 'H', 'E'};
constexpr std::uint32_t kCacheVersion = 1;

static_assert(std::endian::native == std::endian::little, "cache format assumes little-endian hosts");

template <typename T>
void put_raw(std::string& out, const T& value) {
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.append(bytes, sizeof(T));
}

void put_string(std::string& out, std::string_view s) {
    put_raw(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

class Reader {
public:
    Reader(std::string_view data, const std::filesystem::path& path) : data_(data), path_(path) {}

    template <typename T>
    T raw() {
        need(sizeof(T));
        T value;
        std::memcpy(&value, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::string string() {
        const auto len = raw<std::uint32_t>();
        need(len);
        std::string s(data_.substr(pos_, len));
        pos_ += len;
        return s;
    }

    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool at_end() const noexcept { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            throw Error(ErrorCode::parse, "truncated cache file " + path_.string());
        }
    }

    std::string_view data_;
    std::filesystem::path path_;
    std::size_t pos_ = 0;
};

} // namespace

void EmbeddingCache::save(const std::filesystem::path& path) const {
    std::string out;
    std::shared_lock lock(mutex_);
    std::map<std::string_view, const EmbeddingVector*> ordered;
    for (const auto& [key, vec] : entries_) {
        ordered.emplace(key, &vec);
    }
    out.append(kCacheMagic, sizeof(kCacheMagic));
    put_raw(out, kCacheVersion);
    put_string(out, backend_id_);
    put_raw(out, static_cast<std::uint64_t>(ordered.size()));
    for (const auto& [key, vec] : ordered) {
        put_string(out, key);
        put_raw(out, static_cast<std::uint32_t>(vec->dims()));
        for (double x : vec->values) {
            put_raw(out, x);
        }
    }
    lock.unlock();
    // Written to a sibling temp file, then renamed over the target.
    auto tmp = path;
    tmp += ".tmp";
    write_file(tmp, out);
    std::filesystem::rename(tmp, path);
}

EmbeddingCache EmbeddingCache::load(const std::filesystem::path& path, const std::string& backend_id) {
    const std::string data = read_file(path);
    Reader in(data, path);
    if (in.bytes(sizeof(kCacheMagic)) != std::string_view(kCacheMagic, sizeof(kCacheMagic))) {
        throw Error(ErrorCode::parse, "not an embedding cache: " + path.string());
    }
    if (const auto version = in.raw<std::uint32_t>(); version != kCacheVersion) {
        throw Error(ErrorCode::parse, "unsupported cache version " + std::to_string(version));
    }
    auto stored_backend = in.string();
    if (stored_backend != backend_id) {
        throw Error(ErrorCode::config, "cache " + path.string() + " belongs to backend '" + stored_backend +
                                           "', not '" + backend_id + "'");
    }
    EmbeddingCache cache(std::move(stored_backend));
    const auto count = in.raw<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        auto key = in.string();
        const auto dims = in.raw<std::uint32_t>();
        EmbeddingVector v;
        v.values.resize(dims);
        for (auto& x : v.values) {
            x = in.raw<double>();
        }
        cache.entries_.emplace(std::move(key), std::move(v));
    }
    if (!in.at_end()) {
        throw Error(ErrorCode::parse, "trailing bytes in cache file " + path.string());
    }
    return cache;
}

EmbeddingCache EmbeddingCache::load_or_empty(const std::filesystem::path& path, const std::string& backend_id) {
    if (path.empty() || !std::filesystem::exists(path)) {
        return EmbeddingCache(backend_id);
    }
    return load(path, backend_id);
}

namespace {

void check_backend(const EmbeddingBackend& backend, const EmbeddingCache& cache) {
    if (backend.id() != cache.backend_id()) {
        throw Error(ErrorCode::config, "cache for backend '" + cache.backend_id() + "' used with backend '" +
                                           backend.id() + "'");
    }
}

} // namespace

void warm_cache(EmbeddingBackend& backend, const Corpus& corpus, EmbeddingCache& cache,
                const WarmOptions& options) {
    check_backend(backend, cache);
    std::vector<std::string> missing_texts;
    std::vector<std::string> missing_keys;
    std::unordered_set<std::string> queued;
    for (const auto& unit : corpus.units()) {
        auto key = content_hash(unit.text);
        if (cache.contains(key) || !queued.insert(key).second) {
            continue;
        }
        missing_keys.push_back(std::move(key));
        missing_texts.push_back(unit.text);
    }
    const std::size_t batch = std::max<std::size_t>(1, options.embed.batch_size);
    for (std::size_t begin = 0; begin < missing_texts.size(); begin += batch) {
        const std::size_t n = std::min(batch, missing_texts.size() - begin);
        auto vectors = embed(backend, std::span<const std::string>(missing_texts).subspan(begin, n), options.embed);
        for (std::size_t i = 0; i < n; ++i) {
            cache.put(missing_keys[begin + i], std::move(vectors[i]));
        }
        if (options.on_batch) {
            options.on_batch(cache);
        }
    }
}

std::vector<EmbeddingVector> embed_cached(EmbeddingBackend& backend, EmbeddingCache& cache,
                                          std::span<const std::string> texts, const EmbedOptions& options) {
    check_backend(backend, cache);
    std::vector<std::string> keys;
    keys.reserve(texts.size());
    std::vector<std::string> missing;
    std::vector<std::string> missing_keys;
    std::unordered_set<std::string> queued;
    for (const auto& t : texts) {
        keys.push_back(content_hash(t));
        if (!cache.contains(keys.back()) && queued.insert(keys.back()).second) {
            missing.push_back(t);
            missing_keys.push_back(keys.back());
        }
    }
    if (!missing.empty()) {
        auto vectors = embed(backend, missing, options);
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            cache.put(missing_keys[i], std::move(vectors[i]));
        }
    }
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    cache.read([&](const auto& entries) {
        for (const auto& key : keys) {
            out.push_back(entries.at(key));
        }
    });
    return out;
}

} // namespace locrank
