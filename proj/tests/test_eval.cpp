#include "locrank/eval.hpp"
#include "support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <random>

using namespace locrank;

namespace {

RankedList prediction(const std::string& qid, const std::vector<std::string>& ids) {
    RankedList list;
    list.query_id = qid;
    list.k = ids.size();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        list.items.push_back({ids[i], 1.0 - 0.01 * static_cast<double>(i)});
    }
    return list;
}

// ids r1..rN with the given gold ids placed at 1-based ranks.
std::vector<std::string> ranked_with(std::size_t n, const std::vector<std::pair<std::string, std::size_t>>& placed) {
    std::vector<std::string> ids;
    for (std::size_t i = 1; i <= n; ++i) {
        ids.push_back("r" + std::to_string(i));
    }
    for (const auto& [id, rank] : placed) {
        ids[rank - 1] = id;
    }
    return ids;
}

BenchInstance instance(const std::string& qid, std::vector<std::string> gold) {
    return BenchInstance{{qid, "issue " + qid}, std::move(gold), "repo", "ref"};
}

// Six instances scored by hand:
//   q1 gold at rank 1            hit@5  hit@10
//   q2 gold at rank 7            miss@5 hit@10
//   q3 gold at ranks 2 and 6     miss@5 hit@10
//   q4 gold at ranks 3 and 11    miss   miss
//   q5 gold absent               miss   miss
//   q6 no prediction, 3 gold     miss   miss
struct HandFixture {
    std::vector<RankedList> predictions{
        prediction("q1", ranked_with(20, {{"g1", 1}})),
        prediction("q2", ranked_with(20, {{"g2", 7}})),
        prediction("q3", ranked_with(20, {{"a3", 2}, {"b3", 6}})),
        prediction("q4", ranked_with(20, {{"a4", 3}, {"b4", 11}})),
        prediction("q5", ranked_with(20, {})),
    };
    std::vector<BenchInstance> instances{
        instance("q1", {"g1"}),        instance("q2", {"g2"}), instance("q3", {"a3", "b3"}),
        instance("q4", {"a4", "b4"}), instance("q5", {"g5"}), instance("q6", {"x", "y", "z"}),
    };
};

} // namespace

TEST_CASE("acc_at_k definition") {
    const auto p = prediction("q", {"a", "b", "c", "d"});
    const std::vector<std::string> ac{"a", "c"};
    CHECK_FALSE(acc_at_k(p, ac, 2));
    CHECK(acc_at_k(p, ac, 3));
    CHECK(acc_at_k(p, ac, 100));
    const std::vector<std::string> missing{"a", "z"};
    CHECK_FALSE(acc_at_k(p, missing, 100));
    const std::vector<std::string> none;
    CHECK_THROWS_AS(acc_at_k(p, none, 5), Error);
    CHECK_THROWS_AS(acc_at_k(p, ac, 0), Error);
    CHECK_FALSE(acc_at_k(prediction("q", {}), ac, 10));
}

TEST_CASE("hand-scored fixture") {
    HandFixture f;
    Diagnostics diag;
    const auto report = evaluate(f.predictions, f.instances, &diag);
    CHECK(report.n == 6);
    CHECK(report.acc_at.at(5) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(report.acc_at.at(10) == doctest::Approx(3.0 / 6.0).epsilon(1e-12));
    CHECK(diag.size() == 1);

    const std::size_t ks[] = {1, 3, 20};
    const auto more = evaluate(f.predictions, f.instances, ks);
    CHECK(more.acc_at.at(1) == doctest::Approx(1.0 / 6.0));
    CHECK(more.acc_at.at(3) == doctest::Approx(1.0 / 6.0));
    CHECK(more.acc_at.at(20) == doctest::Approx(4.0 / 6.0));

    const auto strata = stratify_by_gold_count(f.instances, f.predictions, 10);
    REQUIRE(strata.size() == 3);
    CHECK(strata[0] == Stratum{"1", 3, {{10, 2.0 / 3.0}}});
    CHECK(strata[1] == Stratum{"2", 2, {{10, 0.5}}});
    CHECK(strata[2] == Stratum{">=3", 1, {{10, 0.0}}});
}

TEST_CASE("duplicate ids are rejected") {
    HandFixture f;
    auto preds = f.predictions;
    preds.push_back(preds.front());
    CHECK_THROWS_AS(evaluate(preds, f.instances), Error);
    auto inst = f.instances;
    inst.push_back(inst.back());
    CHECK_THROWS_AS(evaluate(f.predictions, inst), Error);
    const std::vector<BenchInstance> empty;
    const auto report = evaluate(f.predictions, empty);
    CHECK(report.n == 0);
}

TEST_CASE("reports are invariant to input order and monotone in k") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<RankedList> preds;
        std::vector<BenchInstance> inst;
        const int n = 1 + static_cast<int>(rng() % 30);
        for (int i = 0; i < n; ++i) {
            const auto qid = "q" + std::to_string(i);
            std::vector<std::string> ids;
            for (int r = 0; r < 25; ++r) {
                ids.push_back("u" + std::to_string(rng() % 40));
            }
            std::sort(ids.begin(), ids.end());
            ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
            std::shuffle(ids.begin(), ids.end(), rng);
            preds.push_back(prediction(qid, ids));
            std::vector<std::string> gold;
            const int g = 1 + static_cast<int>(rng() % 3);
            for (int j = 0; j < g; ++j) {
                gold.push_back("u" + std::to_string(rng() % 40));
            }
            std::sort(gold.begin(), gold.end());
            gold.erase(std::unique(gold.begin(), gold.end()), gold.end());
            inst.push_back(instance(qid, gold));
        }
        const std::size_t ks[] = {1, 5, 10, 20};
        const auto base = evaluate(preds, inst, ks);
        std::shuffle(preds.begin(), preds.end(), rng);
        std::shuffle(inst.begin(), inst.end(), rng);
        const auto shuffled = evaluate(preds, inst, ks);
        CHECK(base.acc_at == shuffled.acc_at);
        CHECK(base.acc_at.at(1) <= base.acc_at.at(5));
        CHECK(base.acc_at.at(5) <= base.acc_at.at(10));
        CHECK(base.acc_at.at(10) <= base.acc_at.at(20));

        // Bucket accuracies recombine to the overall figure.
        const auto strata = stratify_by_gold_count(inst, preds, 10);
        std::vector<double> values;
        std::vector<bool> hits;
        for (const auto& b : inst) {
            values.push_back(static_cast<double>(rng() % 7) / 7.0);
            const auto it = std::find_if(preds.begin(), preds.end(),
                                         [&](const RankedList& p) { return p.query_id == b.query.id; });
            hits.push_back(acc_at_k(*it, b.gold_ids, 10));
        }
        const auto quartiles = quartile_strata(values, hits, 10);
        for (const auto* buckets : {&strata, &quartiles}) {
            double weighted = 0.0;
            std::size_t total = 0;
            for (const auto& s : *buckets) {
                weighted += static_cast<double>(s.n) * s.acc_at.at(10);
                total += s.n;
            }
            CHECK(total == inst.size());
            CHECK(std::abs(weighted / static_cast<double>(total) - base.acc_at.at(10)) <= 1e-9);
        }
    }
}

TEST_CASE("rouge-1 F1") {
    CHECK(rouge1_f1("the cat sat", "the cat ran") == doctest::Approx(2.0 / 3.0));
    CHECK(rouge1_f1("The CAT, sat!", "the cat ran") == doctest::Approx(2.0 / 3.0));
    CHECK(rouge1_f1("a a b", "a b b") == doctest::Approx(1.0));
    CHECK(rouge1_f1("a a b", "a b b", RougeVariant::multiset) == doctest::Approx(2.0 / 3.0));
    CHECK(rouge1_f1("", "") == 1.0);
    CHECK(rouge1_f1("", "x") == 0.0);
    CHECK(rouge1_f1("x", "y") == 0.0);
    CHECK(rouge1_f1("same words", "words same") == 1.0);
}

TEST_CASE("type-7 quantiles and quartile buckets") {
    CHECK(quantile({4, 1, 3, 2}, 0.25) == doctest::Approx(1.75));
    CHECK(quantile({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
    CHECK(quantile({4, 1, 3, 2}, 0.0) == 1.0);
    CHECK(quantile({4, 1, 3, 2}, 1.0) == 4.0);
    CHECK(quantile({7}, 0.3) == 7.0);

    const std::vector<double> values{8, 1, 7, 2, 6, 3, 5, 4};
    const std::vector<bool> hits{true, true, false, false, true, false, true, true};
    const auto q = quartile_strata(values, hits, 10);
    REQUIRE(q.size() == 4);
    CHECK(q[0] == Stratum{"Q1", 2, {{10, 0.5}}});  // values 1, 2
    CHECK(q[1] == Stratum{"Q2", 2, {{10, 0.5}}});  // values 3, 4
    CHECK(q[2] == Stratum{"Q3", 2, {{10, 1.0}}});  // values 5, 6
    CHECK(q[3] == Stratum{"Q4", 2, {{10, 0.5}}});  // values 7, 8

    const std::vector<double> flat{5, 5, 5, 5};
    const auto tied = quartile_strata(flat, {true, false, false, false}, 10);
    REQUIRE(tied.size() == 1);
    CHECK(tied[0] == Stratum{"Q1", 4, {{10, 0.25}}});
    CHECK(quartile_strata({}, {}, 10).empty());
}

TEST_CASE("overlap scores against gold units") {
    const Corpus corpus("r", {
                                 testing::make_unit("a.py", "divide", 1, "divide numbers safely"),
                                 testing::make_unit("a.py", "other", 5, "completely unrelated"),
                             });
    const std::vector<BenchInstance> inst{
        BenchInstance{{"q1", "divide numbers"}, {"a.py::divide::1"}, "r", "s"},
        BenchInstance{{"q2", "divide numbers"}, {"a.py::divide::1", "a.py::other::5"}, "r", "s"},
        BenchInstance{{"q3", "divide"}, {"gone.py::f::1"}, "r", "s"},
    };
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    Diagnostics diag;
    const auto scores = overlap_scores(inst, corpus, mock, cache, {}, &diag);
    REQUIRE(scores.size() == 3);
    CHECK(scores[0].lexical == doctest::Approx(0.8));
    CHECK(scores[0].semantic == doctest::Approx(2.0 / std::sqrt(6.0)));
    CHECK(scores[1].lexical == doctest::Approx(0.8));
    OverlapOptions mean;
    mean.aggregate = OverlapAggregate::mean;
    CHECK(overlap_scores(inst, corpus, mock, cache, mean)[1].lexical == doctest::Approx(0.4));
    CHECK(scores[2].lexical == 0.0);
    CHECK(scores[2].semantic == 0.0);
    CHECK(diag.size() == 1);
}

TEST_CASE("bench instance JSON") {
    const auto b = instance("q", {"x::f::1", "y::g::2"});
    const auto line = bench_instance_to_json(b);
    CHECK(line == R"({"query_id":"q","query":"issue q","gold_ids":["x::f::1","y::g::2"],"repo":"repo","snapshot_ref":"ref"})");
    CHECK(bench_instance_from_json(line) == b);
    CHECK_THROWS_AS(bench_instance_from_json(R"({"query_id":"q","query":"x","gold_ids":[]})"), Error);
}

TEST_CASE("report renderings") {
    HandFixture f;
    auto report = evaluate(f.predictions, f.instances);
    report.strata["gold_count"] = stratify_by_gold_count(f.instances, f.predictions, 10);
    CHECK(render_report_table(report, "baseline") == "| System | Acc@5 | Acc@10 |\n"
                                                     "|---|---:|---:|\n"
                                                     "| baseline | 16.67 | 50.00 |\n"
                                                     "\n"
                                                     "n = 6\n"
                                                     "\n"
                                                     "gold_count\n"
                                                     "  1 (n=3)  Acc@10 66.67\n"
                                                     "  2 (n=2)  Acc@10 50.00\n"
                                                     "  >=3 (n=1)  Acc@10 0.00\n");
    CHECK(render_strata_csv(report) == "stratification,bucket,n,acc@10\n"
                                       "gold_count,1,3,0.666667\n"
                                       "gold_count,2,2,0.500000\n"
                                       "gold_count,>=3,1,0.000000\n");
    const auto j = nlohmann::json::parse(report_to_json(report));
    CHECK(j.at("n") == 6);
    CHECK(j.at("acc_at").at("10").get<double>() == doctest::Approx(0.5));
    CHECK(j.at("strata").at("gold_count").size() == 3);
}

TEST_CASE("acc_at_k definitional cases") {
    const auto abc = prediction("q", {"a", "b", "c"});
    const std::vector<std::string> b{"b"};
    const std::vector<std::string> bd{"b", "d"};
    CHECK(acc_at_k(abc, b, 2));
    CHECK_FALSE(acc_at_k(abc, bd, 3));
    const auto p = prediction("q", ranked_with(20, {{"a", 4}, {"b", 9}}));
    const std::vector<std::string> ab{"a", "b"};
    CHECK_FALSE(acc_at_k(p, ab, 5));
    CHECK(acc_at_k(p, ab, 10));
}

TEST_CASE("aggregate means") {
    const std::vector<RankedList> preds{prediction("q1", {"g"}), prediction("q2", {"x"})};
    const std::vector<BenchInstance> inst{instance("q1", {"g"}), instance("q2", {"g"})};
    CHECK(evaluate(preds, inst).acc_at.at(10) == 0.5);
    const std::vector<RankedList> empty{prediction("q1", {}), prediction("q2", {})};
    const auto zero = evaluate(empty, inst);
    CHECK(zero.acc_at.at(5) == 0.0);
    CHECK(zero.acc_at.at(10) == 0.0);
}

TEST_CASE("overlap and bucket degenerate cases") {
    const Corpus corpus("r", {testing::make_unit("a.py", "f", 1, "open the file handle")});
    const std::vector<BenchInstance> inst{BenchInstance{{"q", "open the file handle"}, {"a.py::f::1"}, "r", "s"}};
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    const auto s = overlap_scores(inst, corpus, mock, cache);
    CHECK(s[0].lexical == 1.0);
    CHECK(s[0].semantic == doctest::Approx(1.0));
    const std::vector<RankedList> preds{prediction("q", {"a.py::f::1"})};
    const auto strata = stratify_by_overlap(inst, preds, corpus, mock, cache);
    REQUIRE(strata.lexical.size() == 1);
    CHECK(strata.lexical[0].n == 1);

    const std::vector<BenchInstance> singles{instance("a", {"x"}), instance("b", {"y"})};
    const auto one = stratify_by_gold_count(singles, {}, 10);
    REQUIRE(one.size() == 1);
    CHECK(one[0].label == "1");
    const std::vector<BenchInstance> five{instance("c", {"1", "2", "3", "4", "5"})};
    const auto many = stratify_by_gold_count(five, {}, 10);
    REQUIRE(many.size() == 1);
    CHECK(many[0].label == ">=3");
}
