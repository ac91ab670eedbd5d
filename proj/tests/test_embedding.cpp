#include "locrank/embedding.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cstring>

#include <cmath>
#include <thread>

using namespace locrank;
using testing::TempDir;

namespace {

// Wraps the mock embedder and counts backend traffic.
class CountingEmbedder final : public EmbeddingBackend {
public:
    std::string id() const override { return "mock-fnv256"; }
    std::size_t dims() const override { return MockEmbedder::kDims; }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
        ++batches;
        texts_seen += texts.size();
        if (fail_after && batches > *fail_after) {
            throw Error(ErrorCode::transport, "injected failure");
        }
        return inner.embed_batch(texts);
    }

    MockEmbedder inner;
    std::atomic<int> batches{0};
    std::atomic<std::size_t> texts_seen{0};
    std::optional<int> fail_after;
};

class ScriptedEmbedder final : public EmbeddingBackend {
public:
    explicit ScriptedEmbedder(std::vector<std::vector<EmbeddingVector>> replies) : replies_(std::move(replies)) {}
    std::string id() const override { return "scripted"; }
    std::size_t dims() const override { return 2; }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string>) override { return replies_.at(next_++); }

private:
    std::vector<std::vector<EmbeddingVector>> replies_;
    std::size_t next_ = 0;
};

Corpus seven_units() {
    std::vector<CodeUnit> units;
    for (int i = 0; i < 7; ++i) {
        units.push_back(testing::make_unit("f.py", "fn" + std::to_string(i), i * 3 + 1,
                                           "def fn" + std::to_string(i) + "(): return " + std::to_string(i)));
    }
    return Corpus("r", units);
}

} // namespace

TEST_CASE("mock embedder: hand-computed buckets for tokens a and b") {
    // FNV-1a("a") = 0xaf63dc4c8601ec8c -> bucket 140; FNV-1a("b") = 0xaf63df4c8601f1a5 -> bucket 165.
    const auto v = MockEmbedder::embed_text("a b");
    REQUIRE(v.dims() == 256);
    const double h = 1.0 / std::sqrt(2.0);
    for (std::size_t i = 0; i < 256; ++i) {
        const double expected = (i == 140 || i == 165) ? h : 0.0;
        CHECK(v.values[i] == doctest::Approx(expected).epsilon(1e-15));
    }
    CHECK(MockEmbedder::embed_text("b a") == v);
    CHECK(MockEmbedder::embed_text("A, B!") == v);
}

TEST_CASE("mock embedder: repeated tokens accumulate before normalization") {
    // "a a b": counts 2 at 140 and 1 at 165, norm sqrt(5).
    const auto v = MockEmbedder::embed_text("a a b");
    CHECK(v.values[140] == doctest::Approx(2.0 / std::sqrt(5.0)));
    CHECK(v.values[165] == doctest::Approx(1.0 / std::sqrt(5.0)));
    // "parse" hashes to 0x0c4e87a7a1f6fd8c, the same bucket as "a".
    CHECK(MockEmbedder::embed_text("parse") == MockEmbedder::embed_text("a"));
}

TEST_CASE("mock embedder: empty and separator-only text give the zero vector") {
    for (const char* text : {"", "  ", "--- ;;"}) {
        const auto v = MockEmbedder::embed_text(text);
        CHECK(v.dims() == 256);
        CHECK(v.is_zero());
    }
}

TEST_CASE("embed preserves order and duplicates") {
    MockEmbedder mock;
    const std::vector<std::string> texts = {"open file", "close socket", "open file"};
    const auto out = embed(mock, texts, {.batch_size = 2});
    REQUIRE(out.size() == 3);
    CHECK(out[0] == out[2]);
    CHECK(out[0] == MockEmbedder::embed_text("open file"));
    CHECK(out[1] == MockEmbedder::embed_text("close socket"));
    CHECK_THROWS_AS(embed(mock, std::vector<std::string>{}), Error);
}

TEST_CASE("embed rejects inconsistent backends") {
    const EmbeddingVector two{{1.0, 0.0}};
    const EmbeddingVector three{{1.0, 0.0, 0.0}};
    ScriptedEmbedder short_reply({{two}});
    const std::vector<std::string> texts = {"x", "y"};
    try {
        embed(short_reply, texts);
        FAIL("expected a protocol error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::protocol);
    }
    ScriptedEmbedder mixed({{two, three}});
    CHECK_THROWS_AS(embed(mixed, texts), Error);
}

TEST_CASE("cosine") {
    const auto a = MockEmbedder::embed_text("read config file");
    const auto b = MockEmbedder::embed_text("write config");
    CHECK(cosine(a, a) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cosine(a, b) == doctest::Approx(cosine(b, a)));
    const auto zero = MockEmbedder::embed_text("");
    CHECK(cosine(zero, zero) == 0.0);
    CHECK(cosine(a, zero) == 0.0);
    CHECK_THROWS_AS(cosine(a, EmbeddingVector{{1.0}}), Error);

    EmbeddingVector v{{3.0, 4.0}};
    l2_normalize(v);
    CHECK(v.values[0] == doctest::Approx(0.6));
    CHECK(v.values[1] == doctest::Approx(0.8));
}

TEST_CASE("warm_cache: counts, idempotence and partial progress") {
    CountingEmbedder backend;
    EmbeddingCache cache(backend.id());

    warm_cache(backend, Corpus(), cache);
    CHECK(cache.size() == 0);
    CHECK(backend.batches == 0);

    const auto corpus = seven_units();
    warm_cache(backend, corpus, cache, {.embed = {.batch_size = 3}});
    CHECK(cache.size() == 7);
    CHECK(backend.batches == 3);
    for (const auto& u : corpus.units()) {
        CHECK(cache.get(content_hash(u.text)) == MockEmbedder::embed_text(u.text));
    }

    const int before = backend.batches;
    warm_cache(backend, corpus, cache);
    CHECK(backend.batches == before);

    CountingEmbedder flaky;
    flaky.fail_after = 1;
    EmbeddingCache partial(flaky.id());
    int persisted = 0;
    WarmOptions options{.embed = {.batch_size = 3}, .on_batch = [&](const EmbeddingCache&) { ++persisted; }};
    CHECK_THROWS_AS(warm_cache(flaky, corpus, partial, options), Error);
    CHECK(partial.size() == 3);
    CHECK(persisted == 1);
}

TEST_CASE("cache is bound to its backend") {
    CountingEmbedder backend;
    EmbeddingCache other("remote:model");
    CHECK_THROWS_AS(warm_cache(backend, seven_units(), other), Error);
}

TEST_CASE("cache file round trip is bit-exact") {
    TempDir dir;
    EmbeddingCache cache("mock-fnv256");
    cache.put("k1", EmbeddingVector{{0.1, -0.0, 1e-300, 0.30000000000000004}});
    cache.put("k0", MockEmbedder::embed_text("hello world"));
    cache.save(dir / "cache.bin");
    const auto loaded = EmbeddingCache::load(dir / "cache.bin", "mock-fnv256");
    REQUIRE(loaded.size() == 2);
    const auto k1 = loaded.get("k1");
    REQUIRE(k1);
    CHECK(std::memcmp(k1->values.data(), cache.get("k1")->values.data(), 4 * sizeof(double)) == 0);
    CHECK(std::signbit(k1->values[1]));
    CHECK(loaded.get("k0") == cache.get("k0"));

    cache.save(dir / "again.bin");
    CHECK(read_file(dir / "cache.bin") == read_file(dir / "again.bin"));

    try {
        EmbeddingCache::load(dir / "cache.bin", "remote:x");
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::config);
    }
    CHECK(EmbeddingCache::load_or_empty(dir / "missing.bin", "mock-fnv256").size() == 0);
    testing::write(dir / "junk.bin", "not a cache");
    CHECK_THROWS_AS(EmbeddingCache::load(dir / "junk.bin", "mock-fnv256"), Error);
}

TEST_CASE("cache tolerates concurrent readers and writers") {
    EmbeddingCache cache("mock-fnv256");
    std::vector<std::jthread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&cache, t] {
            for (int i = 0; i < 200; ++i) {
                const auto key = std::to_string(t) + ":" + std::to_string(i);
                cache.put(key, MockEmbedder::embed_text(key));
                CHECK(cache.get(key).has_value());
            }
        });
    }
    threads.clear();
    CHECK(cache.size() == 800);
}

TEST_CASE("embed_cached fills misses only") {
    CountingEmbedder backend;
    EmbeddingCache cache(backend.id());
    const std::vector<std::string> texts = {"alpha", "beta", "alpha"};
    const auto first = embed_cached(backend, cache, texts);
    CHECK(first[0] == first[2]);
    CHECK(backend.texts_seen == 2);
    const auto second = embed_cached(backend, cache, texts);
    CHECK(second == first);
    CHECK(backend.texts_seen == 2);
}

TEST_CASE("content_hash distinguishes length") {
    CHECK(content_hash("abc") != content_hash("abd"));
    CHECK(content_hash("abc") == content_hash("abc"));
    CHECK(content_hash("") == "cbf29ce484222325-0");
}
