#include "locrank/retrieval.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace locrank;
using testing::TempDir;

namespace {

Corpus random_corpus(std::mt19937_64& rng, int n) {
    std::vector<CodeUnit> units;
    std::uniform_int_distribution<int> words(0, 12);
    for (int i = 0; i < n; ++i) {
        units.push_back(testing::make_unit("m" + std::to_string(i % 7) + ".py", "f" + std::to_string(i), i + 1,
                                           testing::random_text(rng, words(rng), 40)));
    }
    return Corpus("r", units);
}

// Independent oracle: score each unit from scratch and fully sort.
std::vector<ScoredId> brute_force(const std::string& query, const Corpus& corpus, std::size_t k) {
    const auto q = MockEmbedder::embed_text(query);
    std::vector<ScoredId> all;
    for (const auto& u : corpus.units()) {
        const auto v = MockEmbedder::embed_text(u.text);
        double dot = 0.0;
        double nq = 0.0;
        double nv = 0.0;
        for (std::size_t i = 0; i < v.dims(); ++i) {
            dot += q.values[i] * v.values[i];
            nq += q.values[i] * q.values[i];
            nv += v.values[i] * v.values[i];
        }
        const double score = (nq == 0.0 || nv == 0.0) ? 0.0 : dot / (std::sqrt(nq) * std::sqrt(nv));
        all.push_back({u.id, std::clamp(score, -1.0, 1.0)});
    }
    std::sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    all.resize(std::min(k, all.size()));
    return all;
}

} // namespace

TEST_CASE("a unit identical to the query ranks first with score 1") {
    std::vector<CodeUnit> units = {
        testing::make_unit("a.py", "open_file", 1, "def open_file(path): return open(path)"),
        testing::make_unit("b.py", "close", 1, "def close(handle): handle.close()"),
    };
    const Corpus corpus("r", units);
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    const auto out = retrieve_topk({"q", units[1].text}, corpus, mock, cache, 2);
    REQUIRE(out.items.size() == 2);
    CHECK(out.items[0].id == units[1].id);
    CHECK(out.items[0].score == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.query_id == "q");
    CHECK(out.k == 2);
}

TEST_CASE("k larger than the corpus is clamped") {
    std::mt19937_64 rng(1);
    const auto corpus = random_corpus(rng, 6);
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    CHECK(retrieve_topk({"q", "w1 w2"}, corpus, mock, cache, 50).items.size() == 6);
}

TEST_CASE("20-unit fixture matches the brute-force oracle at k=5") {
    std::mt19937_64 rng(20);
    const auto corpus = random_corpus(rng, 20);
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    const std::string q = "w3 w7 w11 w3";
    CHECK(retrieve_topk({"q", q}, corpus, mock, cache, 5).items == brute_force(q, corpus, 5));
}

TEST_CASE("ties are broken by ascending id") {
    std::vector<CodeUnit> units = {
        testing::make_unit("c.py", "same", 1, "alpha beta"),
        testing::make_unit("a.py", "same", 1, "beta alpha"),
        testing::make_unit("b.py", "same", 1, "alpha  beta"),
    };
    const Corpus corpus("r", units);
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    const auto out = retrieve_topk({"q", "alpha"}, corpus, mock, cache, 3);
    CHECK(out.ids() == std::vector<std::string>{"a.py::same::1", "b.py::same::1", "c.py::same::1"});
}

TEST_CASE("prefix monotonicity and parallel scoring equivalence") {
    std::mt19937_64 rng(7);
    const auto corpus = random_corpus(rng, 3000);
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    const Query q{"q", "w1 w5 w9 w13"};
    const auto big = retrieve_topk(q, corpus, mock, cache, 100);
    for (std::size_t k : {1, 5, 10, 50}) {
        const auto small = retrieve_topk(q, corpus, mock, cache, k);
        CHECK(std::equal(small.items.begin(), small.items.end(), big.items.begin()));
    }
    RetrieveOptions parallel;
    parallel.jobs = 4;
    CHECK(retrieve_topk(q, corpus, mock, cache, 100, parallel).items == big.items);
    for (std::size_t i = 1; i < big.items.size(); ++i) {
        CHECK(big.items[i - 1].score >= big.items[i].score);
    }
}

TEST_CASE("errors: empty corpus, k = 0, blank query") {
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    try {
        retrieve_topk({"q", "x"}, Corpus(), mock, cache, 5);
        FAIL("expected empty_corpus");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::empty_corpus);
    }
    std::mt19937_64 rng(3);
    const auto corpus = random_corpus(rng, 3);
    CHECK_THROWS_AS(retrieve_topk({"q", "x"}, corpus, mock, cache, 0), Error);
    CHECK_THROWS_AS(retrieve_topk({"q", "  \n"}, corpus, mock, cache, 1), Error);
}

TEST_CASE("query truncation and prefix are applied before embedding") {
    MockEmbedder mock;
    RetrieveOptions cut;
    cut.max_query_chars = 5;
    CHECK(embed_query({"q", "alpha beta"}, mock, cut) == MockEmbedder::embed_text("alpha"));
    RetrieveOptions prefixed;
    prefixed.query_prefix = "query: ";
    CHECK(embed_query({"q", "alpha"}, mock, prefixed) == MockEmbedder::embed_text("query: alpha"));
}

TEST_CASE("prediction JSONL round trip") {
    TempDir dir;
    const std::vector<RankedList> lists = {
        {"q1", {{"a.py::f::1", 0.75}, {"b.py::g::3", 0.125}}, 10},
        {"q2", {}, 10},
    };
    save_predictions(lists, dir / "p.jsonl");
    CHECK(read_file(dir / "p.jsonl") ==
          "{\"query_id\":\"q1\",\"ranking\":[{\"id\":\"a.py::f::1\",\"score\":0.75},{\"id\":\"b.py::g::3\",\"score\":"
          "0.125}]}\n{\"query_id\":\"q2\",\"ranking\":[]}\n");
    const auto loaded = load_predictions(dir / "p.jsonl");
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].items == lists[0].items);
    CHECK(loaded[1].items.empty());
    CHECK_THROWS_AS(prediction_from_json("{\"query_id\":1}"), Error);
}
