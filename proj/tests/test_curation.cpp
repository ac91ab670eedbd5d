#include "locrank/curation.hpp"
#include "locrank/retrieval.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace locrank;
using namespace std::chrono_literals;
using testing::make_unit;

namespace {

const char* kDivideDiff = R"(diff --git a/calc/core.py b/calc/core.py
index 1111111..2222222 100644
--- a/calc/core.py
+++ b/calc/core.py
@@ -0,0 +1,1 @@
+import math
@@ -5,3 +6,5 @@ class Calculator:
     def divide(self, a, b):
-        return a / b
+        if b == 0:
+            raise ZeroDivisionError("b")
+        return a / b
 
diff --git a/tests/test_core.py b/tests/test_core.py
new file mode 100644
--- /dev/null
+++ b/tests/test_core.py
@@ -0,0 +1,2 @@
+def test_divide():
+    pass
)";

Corpus calc_corpus() {
    return Corpus("calc", {
                              make_unit("calc/core.py", "add", 1, "def add(a, b): return a + b"),
                              make_unit("calc/core.py", "divide", 5, "def divide(a, b): return a / b"),
                              make_unit("calc/core.py", "parse", 9, "def parse(text): return text.split()"),
                              make_unit("tests/test_core.py", "test_divide", 1, "def test_divide(): divide(1, 0)"),
                          });
}

PrRecord calc_record(long long pr, std::string diff) {
    PrRecord r;
    r.repo = "calc";
    r.pr = pr;
    r.issue_title = "Division by zero";
    r.issue_body = "divide crashes when b is zero";
    r.base_commit = "abc123";
    r.diff = std::move(diff);
    return r;
}

SnapshotLookup single_snapshot(const Corpus& corpus) {
    return [&corpus](const std::string& repo, const std::string& base) -> const Corpus* {
        return repo == corpus.repo() && base == "abc123" ? &corpus : nullptr;
    };
}

// Independent ranking oracle: full sort of mock cosines.
std::vector<std::string> brute_force_ranking(const std::string& query, const Corpus& corpus) {
    const auto qv = MockEmbedder::embed_text(query);
    std::vector<ScoredId> all;
    for (const auto& u : corpus.units()) {
        const auto uv = MockEmbedder::embed_text(u.text);
        double dot = 0.0;
        double nq = 0.0;
        double nu = 0.0;
        for (std::size_t i = 0; i < qv.values.size(); ++i) {
            dot += qv.values[i] * uv.values[i];
            nq += qv.values[i] * qv.values[i];
            nu += uv.values[i] * uv.values[i];
        }
        const double score = (nq == 0.0 || nu == 0.0) ? 0.0 : dot / (std::sqrt(nq) * std::sqrt(nu));
        all.push_back({u.id, std::clamp(score, -1.0, 1.0)});
    }
    std::sort(all.begin(), all.end(), ranks_before);
    std::vector<std::string> ids;
    for (const auto& s : all) {
        ids.push_back(s.id);
    }
    return ids;
}

} // namespace

TEST_CASE("timestamps") {
    const auto t = parse_timestamp("2024-03-01T12:30:00Z");
    CHECK(format_timestamp(t) == "2024-03-01T12:30:00Z");
    CHECK(parse_timestamp("2024-03-01") == parse_timestamp("2024-03-01T00:00:00"));
    CHECK(parse_timestamp("2024-03-01T12:30:00+00:00") == t);
    CHECK(parse_timestamp("2024-03-02") - parse_timestamp("2024-03-01") == std::chrono::seconds(86400));
    CHECK_THROWS_AS(parse_timestamp("2024-13-01"), Error);
    CHECK_THROWS_AS(parse_timestamp("yesterday"), Error);
}

TEST_CASE("unified diff parsing follows the pre-fix side") {
    const auto blocks = parse_unified_diff(kDivideDiff);
    REQUIRE(blocks.size() == 2);
    CHECK(blocks[0] == ChangeBlock{"calc/core.py", 0, 0, true});
    CHECK(blocks[1] == ChangeBlock{"calc/core.py", 6, 6, false});

    const auto multi = parse_unified_diff("--- a/x.py\n+++ b/x.py\n@@ -10,6 +10,4 @@\n a\n-b\n-c\n d\n-e\n+E\n f\n");
    REQUIRE(multi.size() == 2);
    CHECK(multi[0] == ChangeBlock{"x.py", 11, 12, false});
    CHECK(multi[1] == ChangeBlock{"x.py", 14, 14, false});

    const auto insert = parse_unified_diff("--- a/x.py\n+++ b/x.py\n@@ -3,2 +3,3 @@\n a\n+new\n b\n");
    REQUIRE(insert.size() == 1);
    CHECK(insert[0] == ChangeBlock{"x.py", 3, 3, true});

    const auto no_count = parse_unified_diff("--- a/y.go\n+++ b/y.go\n@@ -7 +7 @@\n-old\n+new\n");
    REQUIRE(no_count.size() == 1);
    CHECK(no_count[0] == ChangeBlock{"y.go", 7, 7, false});

    CHECK(parse_unified_diff("").empty());
    CHECK_THROWS_AS(parse_unified_diff("--- a/x\n+++ b/x\n@@ nonsense @@\n"), Error);
}

TEST_CASE("paths named by a diff include added and deleted files") {
    CHECK(diff_paths(kDivideDiff) == std::vector<std::string>{"calc/core.py", "tests/test_core.py"});
    CHECK(diff_paths("--- a/old.py\n+++ /dev/null\n@@ -1,1 +0,0 @@\n-x\n") == std::vector<std::string>{"old.py"});
}

TEST_CASE("block_touches on span edges") {
    const auto unit = make_unit("calc/core.py", "divide", 5, "x");  // lines 5-6
    CHECK_FALSE(block_touches({"calc/core.py", 4, 4, true}, unit));
    CHECK(block_touches({"calc/core.py", 5, 5, true}, unit));
    CHECK_FALSE(block_touches({"calc/core.py", 6, 6, true}, unit));
    CHECK_FALSE(block_touches({"calc/core.py", 1, 4, false}, unit));
    CHECK(block_touches({"calc/core.py", 4, 5, false}, unit));
    CHECK(block_touches({"calc/core.py", 6, 9, false}, unit));
    CHECK(block_touches({"calc/core.py", 1, 20, false}, unit));
    CHECK_FALSE(block_touches({"calc/core.py", 7, 8, false}, unit));
}

TEST_CASE("test paths") {
    CHECK(is_test_path("tests/x.py"));
    CHECK(is_test_path("src/test_util.py"));
    CHECK(is_test_path("pkg/MySpec.rb"));
    CHECK(is_test_path("src/__TESTS__/a.js"));
    CHECK(is_test_path("lib\\spec\\a.rb"));
    CHECK(is_test_path("src/contest.py"));
    CHECK_FALSE(is_test_path("src/app.py"));
    CHECK_FALSE(is_test_path("tes/t.py"));
}

TEST_CASE("repository filter boundaries") {
    const auto now = parse_timestamp("2025-01-01");
    const auto meta = [&](double fraction, long long stars, int days_ago) {
        RepoMeta m;
        m.name = "r";
        m.stars = stars;
        m.language_fractions[Language::rust] = fraction;
        m.last_commit = now - std::chrono::days(days_ago);
        return m;
    };
    const auto keeps = [&](const RepoMeta& m) {
        const std::vector<RepoMeta> one{m};
        return filter_repos(one, Language::rust, now).size() == 1;
    };
    CHECK(keeps(meta(0.40, 1001, 0)));
    CHECK_FALSE(keeps(meta(0.3999, 1001, 0)));
    CHECK_FALSE(keeps(meta(0.9, 1000, 0)));
    CHECK(keeps(meta(0.9, 1001, 183)));
    CHECK_FALSE(keeps(meta(0.9, 1001, 184)));
    const std::vector<RepoMeta> other{meta(0.9, 5000, 0)};
    CHECK(filter_repos(other, Language::go, now).empty());
}

TEST_CASE("repository metadata JSON") {
    const auto m = repo_meta_from_json(
        R"({"name":"o/r","stars":1500,"language_fractions":{"python":0.7,"Cobol":0.2},"last_commit":"2024-12-01"})");
    CHECK(m.name == "o/r");
    CHECK(m.stars == 1500);
    CHECK(m.language_fractions.size() == 1);
    CHECK(m.language_fractions.at(Language::python) == doctest::Approx(0.7));
    CHECK_THROWS_AS(repo_meta_from_json(
                        R"({"name":"x","stars":1,"language_fractions":{"python":0.7,"go":0.5},"last_commit":"2024-12-01"})"),
                    Error);
    CHECK_THROWS_AS(repo_meta_from_json(R"({"name":"x"})"), Error);
}

TEST_CASE("issue instances: positives from non-test blocks, PR needs a test change") {
    const auto corpus = calc_corpus();
    const auto test_diff = std::string(kDivideDiff) +
                           "--- a/tests/test_core.py\n+++ b/tests/test_core.py\n@@ -1,2 +1,2 @@\n-def test_divide(): "
                           "divide(1, 0)\n+def test_divide(): pass\n \n";
    std::vector<PrRecord> records{calc_record(7, kDivideDiff), calc_record(3, test_diff)};
    auto without_tests = calc_record(5, "--- a/calc/core.py\n+++ b/calc/core.py\n@@ -1,1 +1,1 @@\n-x\n+y\n");
    records.push_back(without_tests);
    auto no_snapshot = calc_record(9, kDivideDiff);
    no_snapshot.base_commit = "missing";
    records.push_back(no_snapshot);
    auto listed_only = calc_record(11, "--- a/calc/core.py\n+++ b/calc/core.py\n@@ -9,1 +9,1 @@\n-x\n+y\n");
    listed_only.changed_files = {"calc/core.py", "spec/parse_spec.rb"};
    records.push_back(listed_only);

    Diagnostics diag;
    const auto instances = build_issue_instances(records, single_snapshot(corpus), &diag);
    REQUIRE(instances.size() == 3);
    CHECK(instances[0].pr == 3);
    CHECK(instances[1].pr == 7);
    CHECK(instances[2].pr == 11);
    // The import inserted above line 1 lies outside add(), so only divide() is touched.
    CHECK(instances[0].positive_ids == std::vector<std::string>{"calc/core.py::divide::5"});
    CHECK(instances[1].positive_ids == std::vector<std::string>{"calc/core.py::divide::5"});
    CHECK(instances[2].positive_ids == std::vector<std::string>{"calc/core.py::parse::9"});
    CHECK(instances[1].query == "Division by zero\n\ndivide crashes when b is zero");
    CHECK(instances[1].snapshot_ref == "abc123");
    CHECK(diag.size() == 1);
}

TEST_CASE("issue instances without any touched unit are dropped") {
    const auto corpus = calc_corpus();
    auto r = calc_record(1, "--- a/README.md\n+++ b/README.md\n@@ -1,1 +1,1 @@\n-a\n+b\n");
    r.changed_files = {"tests/test_core.py"};
    const std::vector<PrRecord> records{r};
    Diagnostics diag;
    CHECK(build_issue_instances(records, single_snapshot(corpus), &diag).empty());
    CHECK(diag.size() == 1);
}

TEST_CASE("PR record and contrastive JSON") {
    const auto r = pr_record_from_json(
        R"({"repo":"o/r","pr":12,"issue_title":"t","base_commit":"c","diff":"d","changed_files":["a","b"]})");
    CHECK(r.repo == "o/r");
    CHECK(r.pr == 12);
    CHECK(r.issue_body.empty());
    CHECK(r.changed_files == std::vector<std::string>{"a", "b"});
    CHECK_THROWS_AS(pr_record_from_json(R"({"repo":"o/r"})"), Error);

    const ContrastiveInstance c{"q \"x\"", "p", {"n1", "n2"}, "o/r"};
    const auto line = contrastive_to_json(c);
    CHECK(line == R"({"query":"q \"x\"","positive_id":"p","negative_ids":["n1","n2"],"repo":"o/r"})");
    CHECK(contrastive_from_json(line) == c);
}

TEST_CASE("consistency filter and hard negatives agree with a brute-force ranking") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 150; ++trial) {
        const int n = 20 + static_cast<int>(rng() % 80);
        std::vector<CodeUnit> units;
        for (int i = 0; i < n; ++i) {
            units.push_back(make_unit("m" + std::to_string(i % 7) + ".py", "f" + std::to_string(i), i * 3 + 1,
                                      testing::random_text(rng, 3 + static_cast<int>(rng() % 6), 40)));
        }
        const Corpus corpus("r", units);
        IssueInstance issue;
        issue.repo = "r";
        issue.pr = trial;
        issue.query = testing::random_text(rng, 5, 40);
        const int positives = 1 + static_cast<int>(rng() % 3);
        std::set<std::string> chosen;
        while (static_cast<int>(chosen.size()) < positives) {
            chosen.insert(corpus.units()[rng() % corpus.size()].id);
        }
        issue.positive_ids.assign(chosen.begin(), chosen.end());

        const auto oracle = brute_force_ranking(issue.query, corpus);
        const auto rank_of = [&](const std::string& id) {
            return static_cast<std::size_t>(std::find(oracle.begin(), oracle.end(), id) - oracle.begin()) + 1;
        };
        CurationOptions options;
        options.top_n = 1 + rng() % 40;
        MockEmbedder mock;
        EmbeddingCache cache(mock.id());
        const auto result = consistency_filter(issue, corpus, mock, cache, options);

        std::vector<std::string> expected_kept;
        for (const auto& id : issue.positive_ids) {
            CHECK(result.positive_ranks.at(id) == rank_of(id));
            if (rank_of(id) <= options.top_n) {
                expected_kept.push_back(id);
            }
        }
        CHECK(result.kept == !expected_kept.empty());
        REQUIRE(result.instances.size() == expected_kept.size());

        std::vector<std::string> expected_negatives;
        for (const auto& id : oracle) {
            if (!chosen.contains(id) && expected_negatives.size() < options.negatives) {
                expected_negatives.push_back(id);
            }
        }
        for (std::size_t i = 0; i < result.instances.size(); ++i) {
            const auto& inst = result.instances[i];
            CHECK(inst.positive_id == expected_kept[i]);
            CHECK(inst.negative_ids == expected_negatives);
            for (const auto& neg : inst.negative_ids) {
                CHECK_FALSE(chosen.contains(neg));
            }
        }
        CHECK(mine_hard_negatives(issue.query, corpus, issue.positive_ids, options.negatives, mock, cache) ==
              expected_negatives);
    }
}

TEST_CASE("rank cut-off is inclusive") {
    std::vector<CodeUnit> units;
    for (int i = 0; i < 60; ++i) {
        units.push_back(make_unit("a.py", "f" + std::to_string(100 + i), i * 3 + 1, "zeta t" + std::to_string(i)));
    }
    const Corpus corpus("r", units);
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    const auto ranks = rank_positions("zeta", corpus, mock, cache);
    // Every unit ties on the query word, so ranks follow id order.
    CHECK(ranks.at("a.py::f100::1") == 1);
    CHECK(ranks.at("a.py::f139::118") == 40);
    CHECK(ranks.at("a.py::f140::121") == 41);

    IssueInstance at40{"zeta", "r", 1, {"a.py::f139::118"}, "s"};
    IssueInstance at41{"zeta", "r", 2, {"a.py::f140::121"}, "s"};
    CHECK(consistency_filter(at40, corpus, mock, cache).kept);
    CHECK_FALSE(consistency_filter(at41, corpus, mock, cache).kept);
}

TEST_CASE("hard negatives report a short supply") {
    const auto corpus = calc_corpus();
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    Diagnostics diag;
    const std::vector<std::string> positives{"calc/core.py::divide::5"};
    const auto negatives = mine_hard_negatives("divide", corpus, positives, 15, mock, cache, &diag);
    CHECK(negatives.size() == 3);
    CHECK(negatives.front() == "tests/test_core.py::test_divide::1");
    CHECK(diag.size() == 1);
}

TEST_CASE("curate end to end") {
    const auto corpus = calc_corpus();
    const std::vector<PrRecord> records{calc_record(7, kDivideDiff)};
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    const auto run = [&] { return curate(records, single_snapshot(corpus), mock, cache); };
    const auto out = run();
    REQUIRE(out.issues.size() == 1);
    REQUIRE(out.contrastive.size() == 1);
    REQUIRE(out.rerank.size() == 1);
    for (std::size_t i = 0; i < out.rerank.size(); ++i) {
        const auto& r = out.rerank[i];
        CHECK(r.candidates.size() == 4);
        REQUIRE(r.label >= 1);
        CHECK(r.candidates[static_cast<std::size_t>(r.label - 1)].unit_id == out.contrastive[i].positive_id);
    }
    CHECK(run().rerank == out.rerank);
    REQUIRE(out.table.size() == 1);
    CHECK(out.table[0].language == Language::python);
    CHECK(out.table[0].repos == 1);
    CHECK(out.table[0].prs == 1);
    CHECK(out.table[0].instances == 1);
    CHECK(render_language_table(out.table) == "language       #repos     #PRs  #instances\n"
                                              "python              1        1           1\n"
                                              "total               1        1           1\n");
}

TEST_CASE("stale repositories are rejected") {
    const auto now = parse_timestamp("2025-01-01");
    const std::vector<RepoMeta> metas{{"old", 5000, {{Language::python, 1.0}}, now - std::chrono::days(200)}};
    CHECK(filter_repos(metas, Language::python, now).empty());
}

TEST_CASE("a hunk inside a long unit marks it positive") {
    const auto blocks = parse_unified_diff("--- a/m.py\n+++ b/m.py\n@@ -10,3 +10,3 @@\n-a\n-b\n-c\n+A\n+B\n+C\n");
    REQUIRE(blocks.size() == 1);
    auto unit = make_unit("m.py", "long", 5, "x");
    unit.end_line = 20;
    CHECK(block_touches(blocks[0], unit));
}

TEST_CASE("fixture PR with two hunks in two functions") {
    const auto corpus = extract_functions(testing::data_dir() / "fixture_repo", all_languages(), {.repo = "fixture"});
    PrRecord r;
    r.repo = "fixture";
    r.pr = 1;
    r.issue_title = "errors on zero";
    r.base_commit = "base";
    r.diff = "diff --git a/calc/core.py b/calc/core.py\n"
             "--- a/calc/core.py\n+++ b/calc/core.py\n"
             "@@ -5,2 +5,4 @@\n     def divide(self, a, b):\n+        if b == 0:\n+            raise ValueError\n"
             "         return a / b\n"
             "diff --git a/calc/format.py b/calc/format.py\n"
             "--- a/calc/format.py\n+++ b/calc/format.py\n"
             "@@ -5,2 +5,2 @@\n def format_error(message):\n-    return \"error: \" + message\n"
             "+    return \"error: \" + str(message)\n"
             "diff --git a/tests/test_calc.py b/tests/test_calc.py\n"
             "--- /dev/null\n+++ b/tests/test_calc.py\n@@ -0,0 +1,1 @@\n+def test_zero(): pass\n";
    const std::vector<PrRecord> records{r};
    const auto instances = build_issue_instances(
        records, [&](const std::string&, const std::string&) -> const Corpus* { return &corpus; });
    REQUIRE(instances.size() == 1);
    CHECK(instances[0].positive_ids ==
          std::vector<std::string>{"calc/core.py::Calculator.divide::5", "calc/format.py::format_error::5"});
}

TEST_CASE("consistency filter degenerate cases") {
    std::mt19937_64 rng(9);
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<CodeUnit> units;
        for (int i = 0; i < 30; ++i) {
            units.push_back(make_unit("s.py", "f" + std::to_string(i), i * 3 + 1, testing::random_text(rng, 4, 30)));
        }
        const Corpus small("r", units);
        const auto query = testing::random_text(rng, 4, 30);
        const IssueInstance any{query, "r", trial, {small.units()[rng() % 30].id}, "s"};
        CHECK(consistency_filter(any, small, mock, cache).kept);
        const IssueInstance top{query, "r", trial, {brute_force_ranking(query, small).front()}, "s"};
        CHECK(consistency_filter(top, small, mock, cache).kept);
    }
}

TEST_CASE("hard negatives: positives only, count 1, and exclusion") {
    const auto corpus = calc_corpus();
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    std::vector<std::string> all;
    for (const auto& u : corpus.units()) {
        all.push_back(u.id);
    }
    CHECK(mine_hard_negatives("divide", corpus, all, 5, mock, cache).empty());

    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<CodeUnit> units;
        for (int i = 0; i < 25; ++i) {
            units.push_back(make_unit("n.py", "g" + std::to_string(i), i * 3 + 1, testing::random_text(rng, 5, 20)));
        }
        const Corpus c("r", units);
        const auto query = testing::random_text(rng, 4, 20);
        const std::vector<std::string> positives{c.units()[rng() % 25].id};
        const auto oracle = brute_force_ranking(query, c);
        const auto expected = oracle.front() == positives[0] ? oracle[1] : oracle[0];
        CHECK(mine_hard_negatives(query, c, positives, 1, mock, cache) == std::vector<std::string>{expected});
        const auto many = mine_hard_negatives(query, c, positives, 24, mock, cache);
        CHECK(std::find(many.begin(), many.end(), positives[0]) == many.end());
        CHECK(std::set<std::string>(many.begin(), many.end()).size() == many.size());
    }
}
