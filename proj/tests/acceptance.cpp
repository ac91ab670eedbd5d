#include "locrank/agent.hpp"
#include "locrank/chat.hpp"
#include "locrank/commands.hpp"
#include "locrank/curation.hpp"
#include "locrank/eval.hpp"
#include "locrank/rerank.hpp"
#include "locrank/retrieval.hpp"
#include "agent_fixture.hpp"
#include "loopback.hpp"
#include "support.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace locrank;
using testing::make_unit;
using testing::TempDir;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Records the first failure of a criterion.
class Checker {
public:
    void require(bool ok, const std::string& what) {
        ++checks_;
        if (!ok) {
            ++failures_;
            if (first_.empty()) {
                first_ = what;
            }
        }
    }
    Outcome outcome(const std::string& summary) const {
        if (failures_ == 0) {
            return {true, summary};
        }
        return {false, std::to_string(failures_) + "/" + std::to_string(checks_) + " checks failed; first: " + first_};
    }

private:
    std::size_t checks_ = 0;
    std::size_t failures_ = 0;
    std::string first_;
};

double exact_cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
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

std::vector<ScoredId> brute_force(const std::string& query, const Corpus& corpus) {
    const auto q = MockEmbedder::embed_text(query);
    std::vector<ScoredId> all;
    for (const auto& u : corpus.units()) {
        all.push_back({u.id, exact_cosine(q, MockEmbedder::embed_text(u.text))});
    }
    std::sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    return all;
}

Corpus random_corpus(std::mt19937_64& rng, std::size_t n, int vocab) {
    std::vector<CodeUnit> units;
    for (std::size_t i = 0; i < n; ++i) {
        units.push_back(make_unit("pkg/m" + std::to_string(i % 13) + ".py", "f" + std::to_string(i),
                                  static_cast<int>(i) * 3 + 1,
                                  testing::random_text(rng, 2 + static_cast<int>(rng() % 10), vocab)));
    }
    return Corpus("random", units);
}

// 1. Retrieval oracle equivalence.
Outcome retrieval_oracle() {
    Checker c;
    std::mt19937_64 rng(1);
    const auto start = std::chrono::steady_clock::now();
    std::size_t comparisons = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = 1 + rng() % 500;
        const auto corpus = random_corpus(rng, n, 30 + static_cast<int>(rng() % 60));
        const auto query = testing::random_text(rng, 1 + static_cast<int>(rng() % 8), 60);
        const auto oracle = brute_force(query, corpus);
        MockEmbedder mock;
        EmbeddingCache cache(mock.id());
        for (std::size_t k : {1, 5, 10, 100}) {
            const auto got = retrieve_topk({"q", query}, corpus, mock, cache, k);
            const std::vector<ScoredId> want(oracle.begin(), oracle.begin() + std::min(k, oracle.size()));
            c.require(got.items == want, "trial " + std::to_string(trial) + " k=" + std::to_string(k));
            ++comparisons;
        }
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    c.require(seconds < 60.0, "took " + std::to_string(seconds) + " s");
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%zu comparisons, 0 mismatches, %.2f s", comparisons, seconds);
    return c.outcome(buf);
}

bool is_full_permutation(const std::vector<int>& order, int n) {
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expected(static_cast<std::size_t>(n));
    std::iota(expected.begin(), expected.end(), 1);
    return sorted == expected;
}

std::string render(const std::vector<int>& order) {
    std::string s;
    for (std::size_t i = 0; i < order.size(); ++i) {
        s += (i ? " > [" : "[") + std::to_string(order[i]) + "]";
    }
    return s;
}

// 2. Rerank permutation safety.
Outcome rerank_safety() {
    Checker c;
    std::mt19937_64 rng(2);
    std::size_t parsed = 0;
    std::size_t rejected = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 10);
        std::vector<int> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 1);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::string response;
        const int kind = trial % 4;
        if (kind == 0) {
            response = render(perm);
        } else if (kind == 1) {
            auto dup = perm;
            for (int j = 0; j < 3; ++j) {
                dup.insert(dup.begin() + static_cast<long>(rng() % (dup.size() + 1)), perm[rng() % perm.size()]);
            }
            response = render(dup);
        } else if (kind == 2) {
            const auto full = render(perm);
            response = full.substr(0, rng() % (full.size() + 1));
        } else {
            static const std::string alphabet = "[]>0123456789 abc,\n-";
            const auto len = rng() % 50;
            for (std::size_t j = 0; j < len; ++j) {
                response.push_back(alphabet[rng() % alphabet.size()]);
            }
        }
        try {
            const auto order = parse_ranking(response, n).order;
            ++parsed;
            c.require(is_full_permutation(order, n), "not a permutation for '" + response + "'");
            if (kind == 0) {
                c.require(order == perm, "valid ranking altered: '" + response + "'");
            }
        } catch (const Error& e) {
            ++rejected;
            c.require(e.code() == ErrorCode::parse, "unexpected error code for '" + response + "'");
            c.require(kind != 0, "valid ranking rejected: '" + response + "'");
        }
    }

    std::vector<CodeUnit> units;
    RankedList ranked{"q", {}, 100};
    for (int i = 0; i < 100; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "f%03d", i);
        units.push_back(make_unit("a.py", name, i * 3 + 1, "def " + std::string(name) + "(): pass"));
        ranked.items.push_back({units.back().id, 1.0 - 0.001 * i});
    }
    const Corpus corpus("r", units);
    ScriptedChat identity(identity_ranker());
    const auto out = rerank_sliding({"q", "issue text"}, ranked, corpus, identity);
    c.require(prediction_to_json(out) == prediction_to_json(ranked), "identity rerank changed the list");
    c.require(identity.calls() == 19, "expected 19 window calls, got " + std::to_string(identity.calls()));
    return c.outcome(std::to_string(parsed) + " repaired, " + std::to_string(rejected) +
                     " parse errors; identity over 100 byte-exact");
}

// 3. Agent loop invariants.
Outcome agent_invariants() {
    using testing::finish_reply;
    using testing::search_reply;
    Checker c;
    const auto corpus = testing::topic_corpus({{"alpha", 10}, {"beta", 10}, {"gamma", 6}});
    const std::vector<std::pair<std::string, std::vector<std::string>>> scenarios{
        {"finish-first", {finish_reply()}},
        {"three-turn overlap",
         {search_reply("alpha"), search_reply("gamma u0 u1 u2 u3"), search_reply("beta gamma"), finish_reply()}},
        {"zero-new-ids", {search_reply("beta"), search_reply("beta"), search_reply("gamma")}},
        {"malformed", {"no sections at all", search_reply("alpha"), "ACTION: {oops", "still not json"}},
        {"max-turns",
         {search_reply("alpha"), search_reply("beta"), search_reply("gamma"), search_reply("u1"),
          search_reply("u2"), search_reply("u3")}},
    };
    const AgentConfig config;
    for (const auto& [name, script] : scenarios) {
        std::string transcripts[2];
        for (int run = 0; run < 2; ++run) {
            testing::AgentRig rig(script);
            auto b = rig.backends();
            AgentState state({"I-" + name, "alpha beta gamma issue"}, config);
            std::vector<std::string> previous;
            while (!state.terminated()) {
                state = step(std::move(state), corpus, config, b);
                const auto& now = state.memory();
                c.require(now.size() >= previous.size() && std::equal(previous.begin(), previous.end(), now.begin()),
                          name + ": memory shrank or reordered");
                c.require(state.turn <= config.max_turns, name + ": turn bound exceeded");
                previous = now;
            }
            testing::AgentRig rig2(script);
            auto b2 = rig2.backends();
            const auto result = run_agent({"I-" + name, "alpha beta gamma issue"}, corpus, config, b2);
            c.require(result.state.memory() == previous, name + ": run_agent memory differs from stepping");
            c.require(result.ranking.items.size() <= 10, name + ": more than 10 results");
            if (result.used_fallback) {
                c.require(result.state.memory().empty(), name + ": fallback with non-empty memory");
            } else {
                const std::set<std::string> memory(previous.begin(), previous.end());
                for (const auto& id : result.ranking.ids()) {
                    c.require(memory.contains(id), name + ": output id outside memory");
                }
            }
            transcripts[run] = transcript_to_jsonl(result.state) + prediction_to_json(result.ranking);
        }
        c.require(transcripts[0] == transcripts[1], name + ": transcripts differ between runs");
    }
    return c.outcome(std::to_string(scenarios.size()) + " scripted trajectories, invariants hold");
}

struct CalcFixture {
    TempDir dir;
    fs::path corpus;
    fs::path script;
    fs::path issues;
    std::string gold = "src/safety.py::guard_denominator::1";
    Query issue{"calc-1", "The calculator crash happens when I divide"};
    std::string reformulated = "guard denominator zerodivisionerror";

    CalcFixture() {
        for (int f = 0; f < 30; ++f) {
            std::string text;
            for (int m = 0; m < 5; ++m) {
                text += "def calc_op_" + std::to_string(f) + "_" + std::to_string(m) +
                        "(value):\n    # calculator divide crash report\n    return value\n\n";
            }
            testing::write(dir / ("repo/src/calculator_" + std::to_string(f) + ".py"), text);
        }
        testing::write(dir / "repo/src/safety.py", "def guard_denominator(value):\n    if value == 0:\n        raise "
                                                    "ZeroDivisionError(\"denominator\")\n    return value\n");
        corpus = dir / "corpus.jsonl";
        IndexArgs args;
        args.repo_root = dir / "repo";
        args.out = corpus;
        args.repo = "calc";
        cmd_index(args, RunConfig{}, nullptr);

        nlohmann::json s;
        s["agent"] = {testing::search_reply(issue.text, "start from the report"),
                      testing::search_reply(reformulated, "look for zero checks"), testing::finish_reply()};
        s["rerank"] = {{"prefer", {"zerodivisionerror"}}};
        s["reformulate"] = {nlohmann::json::array({reformulated}).dump()};
        script = dir / "script.json";
        testing::write(script, s.dump(2));

        issues = dir / "issues.jsonl";
        testing::write(issues, nlohmann::json{{"query_id", issue.id}, {"query", issue.text}}.dump() + "\n");
    }

    RunConfig config(bool rerank) const {
        RunConfig c;
        c.chat_script = script;
        c.rerank = rerank;
        return c;
    }
};

// 4. Agent beats single-pass on a constructed fixture.
Outcome agent_vs_single_pass() {
    Checker c;
    CalcFixture fx;
    const auto corpus = load_corpus(fx.corpus);
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    const auto full = retrieve_topk(fx.issue, corpus, mock, cache, corpus.size()).ids();
    const auto gold_rank = static_cast<std::size_t>(std::find(full.begin(), full.end(), fx.gold) - full.begin()) + 1;
    const auto reform = retrieve_topk({"r", fx.reformulated}, corpus, mock, cache, 10).ids();
    c.require(gold_rank > 100, "gold ranks " + std::to_string(gold_rank) + " for the original issue");
    c.require(std::find(reform.begin(), reform.end(), fx.gold) != reform.end(),
              "gold not in top-10 for the reformulated query");

    const std::vector<BenchInstance> bench{{fx.issue, {fx.gold}, "calc", "HEAD"}};
    Diagnostics diag;
    LocalizeArgs single{fx.corpus, {fx.issue}, fx.dir / "single.jsonl"};
    const auto plain = cmd_localize(single, fx.config(false), &diag);
    const auto reranked = cmd_localize(single, fx.config(true), &diag);
    AgentArgs agent{fx.corpus, {fx.issue}, fx.dir / "agent.jsonl", std::nullopt};
    const auto runs = cmd_agent(agent, fx.config(false), &diag);
    std::vector<RankedList> agent_preds{runs.front().ranking};

    const double acc_plain = evaluate(plain, bench).acc_at.at(10);
    const double acc_rerank = evaluate(reranked, bench).acc_at.at(10);
    const double acc_agent = evaluate(agent_preds, bench).acc_at.at(10);
    c.require(acc_agent == 1.0, "agent Acc@10 " + std::to_string(acc_agent));
    c.require(acc_plain == 0.0, "retrieval-only Acc@10 " + std::to_string(acc_plain));
    c.require(acc_rerank == 0.0, "single-pass rerank Acc@10 " + std::to_string(acc_rerank));
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "gold rank %zu for the issue; Acc@10 agent %.1f, single-pass %.1f (retrieval) / %.1f (reranked)",
                  gold_rank, acc_agent, acc_plain, acc_rerank);
    return c.outcome(buf);
}

// 5. Curation correctness.
Outcome curation_correctness() {
    Checker c;
    std::mt19937_64 rng(5);
    std::size_t kept = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto corpus = random_corpus(rng, 80 + rng() % 40, 40);
        IssueInstance issue;
        issue.repo = "random";
        issue.pr = trial;
        issue.query = testing::random_text(rng, 6, 40);
        const auto oracle = brute_force(issue.query, corpus);
        // Positive drawn from ranks 30..50 so the cut-off at 40 is straddled.
        const auto rank = 30 + static_cast<std::size_t>(trial % 21);
        issue.positive_ids = {oracle[rank - 1].id};
        MockEmbedder mock;
        EmbeddingCache cache(mock.id());
        const auto result = consistency_filter(issue, corpus, mock, cache);
        c.require(result.kept == (rank <= 40), "trial " + std::to_string(trial) + " rank " + std::to_string(rank));
        c.require(result.positive_ranks.at(issue.positive_ids[0]) == rank, "rank mismatch");
        kept += result.kept ? 1 : 0;
    }

    for (int trial = 0; trial < 500; ++trial) {
        const auto corpus = random_corpus(rng, 5 + rng() % 60, 25);
        std::set<std::string> positives;
        const auto n_pos = 1 + rng() % 5;
        while (positives.size() < std::min<std::size_t>(n_pos, corpus.size())) {
            positives.insert(corpus.units()[rng() % corpus.size()].id);
        }
        const std::vector<std::string> pos(positives.begin(), positives.end());
        MockEmbedder mock;
        EmbeddingCache cache(mock.id());
        const auto negatives =
            mine_hard_negatives(testing::random_text(rng, 5, 25), corpus, pos, 1 + rng() % 20, mock, cache);
        for (const auto& n : negatives) {
            c.require(!positives.contains(n), "negative intersects positives");
        }
    }

    const auto now = parse_timestamp("2025-06-01");
    const auto keeps = [&](double fraction, long long stars, int days) {
        RepoMeta m{"r", stars, {{Language::java, fraction}}, now - std::chrono::days(days)};
        const std::vector<RepoMeta> one{m};
        return filter_repos(one, Language::java, now).size() == 1;
    };
    c.require(!keeps(0.9, 1000, 0), "stars=1000 accepted");
    c.require(keeps(0.9, 1001, 0), "stars=1001 rejected");
    c.require(keeps(0.40, 5000, 0), "fraction=0.40 rejected");
    c.require(keeps(0.9, 5000, 183), "183 days rejected");
    c.require(!keeps(0.9, 5000, 184), "184 days accepted");
    return c.outcome("50 straddling instances (" + std::to_string(kept) +
                     " kept), 500 negative trials, repo filter boundaries");
}

RankedList ranked_with(const std::string& qid, const std::vector<std::pair<std::string, std::size_t>>& placed) {
    RankedList list{qid, {}, 20};
    for (std::size_t i = 1; i <= 20; ++i) {
        list.items.push_back({"pad" + std::to_string(i), 1.0 - 0.01 * static_cast<double>(i)});
    }
    for (const auto& [id, rank] : placed) {
        list.items[rank - 1].id = id;
    }
    return list;
}

// 6. Metric fidelity.
Outcome metric_fidelity() {
    Checker c;
    // Gold ranks per instance (0 = absent) with hand-derived hits at k = 1, 5, 10.
    struct Row {
        std::vector<std::size_t> ranks;
        bool predicted;
        bool at1, at5, at10;
    };
    const std::vector<Row> rows{
        {{1}, true, true, true, true},        {{2}, true, false, true, true},
        {{5}, true, false, true, true},       {{6}, true, false, false, true},
        {{10}, true, false, false, true},     {{11}, true, false, false, false},
        {{0}, true, false, false, false},     {{1, 2}, true, false, true, true},
        {{1, 10}, true, false, false, true},  {{3, 4, 5}, true, false, true, true},
        {{5, 6}, true, false, false, true},   {{9, 11}, true, false, false, false},
        {{1, 0}, true, false, false, false},  {{2}, true, false, true, true},
        {{7}, true, false, false, true},      {{4, 8}, true, false, false, true},
        {{1}, true, true, true, true},        {{20}, true, false, false, false},
        {{3}, true, false, true, true},       {{1}, false, false, false, false},
    };
    std::vector<RankedList> preds;
    std::vector<BenchInstance> bench;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto qid = "h" + std::to_string(i + 1);
        std::vector<std::string> gold;
        std::vector<std::pair<std::string, std::size_t>> placed;
        for (std::size_t j = 0; j < rows[i].ranks.size(); ++j) {
            gold.push_back(qid + "-g" + std::to_string(j));
            if (rows[i].ranks[j] != 0) {
                placed.emplace_back(gold.back(), rows[i].ranks[j]);
            }
        }
        bench.push_back({{qid, "issue"}, gold, "r", "s"});
        if (rows[i].predicted) {
            preds.push_back(ranked_with(qid, placed));
            c.require(acc_at_k(preds.back(), gold, 1) == rows[i].at1, qid + " @1");
            c.require(acc_at_k(preds.back(), gold, 5) == rows[i].at5, qid + " @5");
            c.require(acc_at_k(preds.back(), gold, 10) == rows[i].at10, qid + " @10");
        }
    }
    const std::size_t ks[] = {1, 5, 10};
    const auto report = evaluate(preds, bench, ks);
    c.require(report.acc_at.at(1) == 2.0 / 20.0, "aggregate Acc@1");
    c.require(report.acc_at.at(5) == 8.0 / 20.0, "aggregate Acc@5");
    c.require(report.acc_at.at(10) == 14.0 / 20.0, "aggregate Acc@10");

    std::mt19937_64 rng(6);
    for (int pair = 0; pair < 1000; ++pair) {
        RankedList p{"q", {}, 0};
        std::vector<std::string> universe;
        for (int i = 0; i < 60; ++i) {
            universe.push_back("u" + std::to_string(i));
        }
        std::shuffle(universe.begin(), universe.end(), rng);
        const auto len = rng() % 60;
        for (std::size_t i = 0; i < len; ++i) {
            p.items.push_back({universe[i], 1.0 - 0.001 * static_cast<double>(i)});
        }
        std::vector<std::string> gold;
        const auto g = 1 + rng() % 4;
        std::shuffle(universe.begin(), universe.end(), rng);
        gold.assign(universe.begin(), universe.begin() + static_cast<long>(g));
        bool previous = false;
        for (std::size_t k = 1; k <= 61; ++k) {
            const bool hit = acc_at_k(p, gold, k);
            c.require(!previous || hit, "monotonicity broken at k=" + std::to_string(k));
            previous = hit;
        }
    }

    const auto strata = stratify_by_gold_count(bench, preds, 10);
    std::vector<double> values;
    std::vector<bool> hits;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        values.push_back(static_cast<double>(rng() % 5));
        hits.push_back(rows[i].at10);
    }
    const auto quartiles = quartile_strata(values, hits, 10);
    for (const auto* buckets : {&strata, &quartiles}) {
        double weighted = 0.0;
        std::size_t n = 0;
        for (const auto& s : *buckets) {
            weighted += static_cast<double>(s.n) * s.acc_at.at(10);
            n += s.n;
        }
        c.require(n == rows.size(), "strata do not cover every instance");
        c.require(std::abs(weighted / static_cast<double>(n) - report.acc_at.at(10)) <= 1e-9,
                  "strata do not recombine");
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "20-instance fixture Acc@1/5/10 = %.2f/%.2f/%.2f; 1000 monotone pairs",
                  report.acc_at.at(1), report.acc_at.at(5), report.acc_at.at(10));
    return c.outcome(buf);
}

// 7. End-to-end determinism through the CLI.
Outcome determinism() {
    Checker c;
    CalcFixture fx;
    const auto more_issues = fx.dir / "issues2.jsonl";
    testing::write(more_issues, read_file(fx.issues) +
                                    nlohmann::json{{"query_id", "calc/2"}, {"query", "value guard report"}}.dump() +
                                    "\n");
    std::string localize_out[3];
    std::string agent_out[3];
    for (int run = 0; run < 3; ++run) {
        TempDir scratch;
        const auto common = " --corpus " + testing::quote(fx.corpus) + " --issues " + testing::quote(more_issues) +
                            " --chat-script " + testing::quote(fx.script) + " --seed 42";
        auto r = testing::run_cli("localize" + common + " --rerank --out " + testing::quote(scratch / "p.jsonl"),
                                  scratch.path());
        c.require(r.exit_code == 0, "localize exit " + std::to_string(r.exit_code) + ": " + r.err);
        localize_out[run] = r.out + read_file(scratch / "p.jsonl");

        fs::create_directories(scratch / "t");
        r = testing::run_cli("agent" + common + " --out " + testing::quote(scratch / "a.jsonl") + " --transcript " +
                                 testing::quote(scratch / "t"),
                             scratch.path());
        c.require(r.exit_code == 0, "agent exit " + std::to_string(r.exit_code) + ": " + r.err);
        agent_out[run] = r.out + r.err + read_file(scratch / "a.jsonl") + read_file(scratch / "t" / "calc-1.jsonl") +
                         read_file(scratch / "t" / "calc_2.jsonl");
    }
    for (int run = 1; run < 3; ++run) {
        c.require(localize_out[run] == localize_out[0], "localize output differs in run " + std::to_string(run + 1));
        c.require(agent_out[run] == agent_out[0], "agent output differs in run " + std::to_string(run + 1));
    }
    return c.outcome("3 runs each of localize and agent, byte-identical (" +
                     std::to_string(localize_out[0].size() + agent_out[0].size()) + " bytes)");
}

std::string wire(const std::string& name) {
    auto text = read_file(testing::data_dir() / "wire" / name);
    while (!text.empty() && text.back() == '\n') {
        text.pop_back();
    }
    return text;
}

// 8. Wire conformance.
Outcome wire_conformance() {
    Checker c;
    const auto embed_req = nlohmann::json::parse(wire("embeddings_request.json"));
    const auto chat_req = nlohmann::json::parse(wire("chat_request.json"));
    const auto inputs = embed_req.at("input").get<std::vector<std::string>>();
    std::vector<ChatMessage> messages;
    for (const auto& m : chat_req.at("messages")) {
        messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    }
    c.require(encode_embedding_request(embed_req.at("model").get<std::string>(), inputs) ==
                  wire("embeddings_request.json"),
              "embedding request re-encoding");
    c.require(encode_chat_request(chat_req.at("model").get<std::string>(), messages,
                                  chat_req.at("temperature").get<double>()) == wire("chat_request.json"),
              "chat request re-encoding");

    const auto embed_resp = nlohmann::json::parse(wire("embeddings_response.json"));
    const auto vectors = decode_embedding_response(wire("embeddings_response.json"), inputs.size());
    for (const auto& item : embed_resp.at("data")) {
        const auto index = item.at("index").get<std::size_t>();
        c.require(vectors.at(index).values == item.at("embedding").get<std::vector<double>>(),
                  "embedding values lost at index " + std::to_string(index));
    }
    const auto chat_resp = nlohmann::json::parse(wire("chat_response.json"));
    c.require(decode_chat_response(wire("chat_response.json")) ==
                  chat_resp.at("choices").at(0).at("message").at("content").get<std::string>(),
              "chat content lost");

    testing::Loopback loop;
    testing::RequestLog log;
    loop.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        log.add(req);
        res.set_content(wire("embeddings_response.json"), "application/json");
    });
    loop.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        log.add(req);
        res.set_content(wire("chat_response.json"), "application/json");
    });
    loop.start();
    std::shared_ptr<HttpTransport> transport = make_http_transport({loop.url(), "sk-wire", std::chrono::seconds(5)});
    RemoteEmbedder embedder(transport, embed_req.at("model").get<std::string>());
    const auto live = embedder.embed_batch(inputs);
    RemoteChat chat(transport, chat_req.at("model").get<std::string>());
    const auto reply = chat.complete(messages);
    loop.stop();

    const auto entries = log.entries();
    c.require(entries.size() == 2, "expected two requests");
    if (entries.size() == 2) {
        c.require(entries[0].body == wire("embeddings_request.json"), "embedding client request body");
        c.require(entries[1].body == wire("chat_request.json"), "chat client request body");
        c.require(entries[0].authorization == "Bearer sk-wire", "authorization header");
    }
    c.require(live.size() == vectors.size(), "embedding count through the client");
    for (std::size_t i = 0; i < live.size() && i < vectors.size(); ++i) {
        auto expected = vectors[i];
        l2_normalize(expected);
        c.require(live[i].values == expected.values, "client vector " + std::to_string(i));
    }
    c.require(reply == "[2] > [1] > [3]", "chat client reply");
    return c.outcome("embeddings and chat fixtures round-trip through encoders and live clients");
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"retrieval oracle equivalence", retrieval_oracle},
        {"rerank permutation safety", rerank_safety},
        {"agent loop invariants", agent_invariants},
        {"agent beats single-pass on constructed fixture", agent_vs_single_pass},
        {"curation correctness", curation_correctness},
        {"metric fidelity", metric_fidelity},
        {"end-to-end determinism", determinism},
        {"wire conformance", wire_conformance},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << ": " << criteria[i].first << " -- "
                  << o.detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
              << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}
