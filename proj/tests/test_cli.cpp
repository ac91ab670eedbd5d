#include "locrank/agent.hpp"
#include "locrank/corpus.hpp"
#include "locrank/curation.hpp"
#include "locrank/eval.hpp"
#include "locrank/retrieval.hpp"
#include "agent_fixture.hpp"
#include "golden.hpp"
#include "support.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

using namespace locrank;
using testing::quote;
using testing::run_cli;
using testing::TempDir;

namespace {

std::string fixture_repo() { return quote(testing::data_dir() / "fixture_repo"); }

nlohmann::json error_of(const testing::RunResult& r) { return nlohmann::json::parse(r.err).at("error"); }

} // namespace

TEST_CASE("index on an empty directory yields a valid empty corpus") {
    TempDir dir;
    std::filesystem::create_directories(dir / "empty");
    const auto r = run_cli("index --repo-root " + quote(dir / "empty") + " --out " + quote(dir / "c.jsonl"),
                           dir.path());
    CHECK(r.exit_code == 0);
    CHECK(nlohmann::json::parse(r.out).at("units") == 0);
    const auto corpus = load_corpus(dir / "c.jsonl");
    CHECK(corpus.empty());
}

TEST_CASE("index then localize matches the library and the frozen output") {
    TempDir dir;
    const auto corpus_path = dir / "c.jsonl";
    auto r = run_cli("index --repo-root " + fixture_repo() + " --out " + quote(corpus_path) + " --repo fixture",
                     dir.path());
    REQUIRE(r.exit_code == 0);
    const auto summary = nlohmann::json::parse(r.out);
    CHECK(summary.at("units") == 7);
    CHECK(summary.at("languages").at("python") == 5);
    CHECK(summary.at("languages").at("javascript") == 2);

    testing::write(dir / "div.txt", "Division by zero crashes the calculator when b is zero");
    r = run_cli("localize --corpus " + quote(corpus_path) + " --issue-file " + quote(dir / "div.txt") +
                    " --k 3 --out " + quote(dir / "pred.jsonl"),
                dir.path());
    REQUIRE(r.exit_code == 0);
    const auto out = read_file(dir / "pred.jsonl");

    const auto corpus = load_corpus(corpus_path);
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    const auto expected =
        retrieve_topk({"div", "Division by zero crashes the calculator when b is zero"}, corpus, mock, cache, 3);
    CHECK(out == prediction_to_json(expected) + "\n");
    testing::check_golden("localize_fixture.jsonl", out);
}

TEST_CASE("eval through the CLI agrees with the library") {
    TempDir dir;
    RankedList p1{"q1", {{"a", 0.9}, {"b", 0.8}}, 2};
    RankedList p2{"q2", {{"c", 0.9}}, 1};
    save_predictions({p1, p2}, dir / "pred.jsonl");
    const std::vector<BenchInstance> inst{{{"q1", "x"}, {"b"}, "r", "s"}, {{"q2", "y"}, {"z"}, "r", "s"},
                                          {{"q3", "z"}, {"a"}, "r", "s"}};
    save_bench_instances(inst, dir / "inst.jsonl");
    const auto r = run_cli("eval --predictions " + quote(dir / "pred.jsonl") + " --instances " +
                               quote(dir / "inst.jsonl") + " --out " + quote(dir / "report.json") + " --table " +
                               quote(dir / "table.md") + " --ks 1,5",
                           dir.path());
    REQUIRE(r.exit_code == 0);
    CHECK(r.err.find("warning: ") != std::string::npos);
    const auto report = nlohmann::json::parse(read_file(dir / "report.json"));
    CHECK(report.at("n") == 3);
    CHECK(report.at("acc_at").at("1").get<double>() == doctest::Approx(0.0));
    CHECK(report.at("acc_at").at("5").get<double>() == doctest::Approx(1.0 / 3.0));
    CHECK(report.at("strata").contains("gold_count"));
    CHECK(read_file(dir / "table.md").starts_with("| System | Acc@1 | Acc@5 |"));
}

TEST_CASE("agent through the CLI writes predictions and a transcript") {
    TempDir dir;
    const auto corpus = testing::topic_corpus({{"alpha", 10}, {"beta", 10}});
    save_corpus(corpus, dir / "c.jsonl");
    nlohmann::json script;
    script["agent"] = {testing::search_reply("beta"), testing::finish_reply()};
    script["rerank"] = "identity";
    testing::write(dir / "script.json", script.dump());
    testing::write(dir / "issue.txt", "alpha");
    const auto r = run_cli("agent --corpus " + quote(dir / "c.jsonl") + " --issue-file " + quote(dir / "issue.txt") +
                               " --issue-id I-1 --chat-script " + quote(dir / "script.json") + " --out " +
                               quote(dir / "pred.jsonl") + " --transcript " + quote(dir / "t.jsonl"),
                           dir.path());
    REQUIRE(r.exit_code == 0);
    const auto run = nlohmann::json::parse(r.out).at("runs").at(0);
    CHECK(run.at("query_id") == "I-1");
    CHECK(run.at("stop") == "finish");
    CHECK(run.at("memory") == 10);
    const auto preds = load_predictions(dir / "pred.jsonl");
    REQUIRE(preds.size() == 1);
    CHECK(preds[0].items.front().id == "src/beta.py::beta_00::1");
    CHECK(read_file(dir / "t.jsonl").find("\"issue_description\":\"beta\"") != std::string::npos);
}

TEST_CASE("curate through the CLI") {
    TempDir dir;
    const Corpus snapshot("calc", {testing::make_unit("calc/core.py", "add", 1, "def add(a, b): return a + b"),
                                   testing::make_unit("calc/core.py", "divide", 5, "def divide(a, b): return a / b")});
    std::filesystem::create_directories(dir / "repos" / "calc");
    save_corpus(snapshot, dir / "repos" / "calc" / "abc.jsonl");
    nlohmann::json pr = {{"repo", "calc"},
                         {"pr", 4},
                         {"issue_title", "divide by zero"},
                         {"issue_body", ""},
                         {"base_commit", "abc"},
                         {"changed_files", {"calc/core.py", "tests/test_core.py"}},
                         {"diff", "--- a/calc/core.py\n+++ b/calc/core.py\n@@ -6,1 +6,1 @@\n-x\n+y\n"}};
    testing::write(dir / "prs.jsonl", pr.dump() + "\n");
    const auto r = run_cli("curate --pr-records " + quote(dir / "prs.jsonl") + " --repos-dir " +
                               quote(dir / "repos") + " --out-contrastive " + quote(dir / "c.jsonl") +
                               " --out-rerank " + quote(dir / "r.jsonl") + " --table " + quote(dir / "t.txt"),
                           dir.path());
    REQUIRE(r.exit_code == 0);
    const auto summary = nlohmann::json::parse(r.out);
    CHECK(summary.at("issues") == 1);
    CHECK(summary.at("contrastive") == 1);
    const auto c = contrastive_from_json(read_file(dir / "c.jsonl"));
    CHECK(c.positive_id == "calc/core.py::divide::5");
    CHECK(c.negative_ids == std::vector<std::string>{"calc/core.py::add::1"});
    CHECK(read_file(dir / "t.txt").find("python") != std::string::npos);
}

TEST_CASE("usage and runtime errors are reported as JSON") {
    TempDir dir;
    auto r = run_cli("", dir.path());
    CHECK(r.exit_code == 2);
    CHECK(error_of(r).at("code") == "usage");

    r = run_cli("localize --corpus x.jsonl --out y.jsonl --bogus", dir.path());
    CHECK(r.exit_code == 2);
    CHECK(error_of(r).at("code") == "usage");

    r = run_cli("localize --corpus x.jsonl --out y.jsonl", dir.path());
    CHECK(r.exit_code == 2);

    r = run_cli("index --repo-root " + quote(dir / "nope") + " --out " + quote(dir / "c.jsonl"), dir.path());
    CHECK(r.exit_code == 1);
    CHECK(error_of(r).at("code") == "not_found");

    r = run_cli("index --repo-root " + fixture_repo() + " --out " + quote(dir / "c.jsonl") + " --languages cobol",
                dir.path());
    CHECK(r.exit_code == 2);

    testing::write(dir / "bad.conf", "[retrieve]\nwhat = 1\n");
    r = run_cli("index --repo-root " + fixture_repo() + " --out " + quote(dir / "c.jsonl") + " --config " +
                    quote(dir / "bad.conf"),
                dir.path());
    CHECK(r.exit_code == 1);
    CHECK(error_of(r).at("code") == "config");
}
