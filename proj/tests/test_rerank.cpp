#include "locrank/rerank.hpp"
#include "golden.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>

using namespace locrank;

namespace {

constexpr const char* kSystem =
    "You are CodeRanker, an intelligent code reviewer that can analyze GitHub issues and rank code functions based "
    "on their relevance to containing the faults causing the GitHub issue.";

constexpr const char* kResponseFormat =
    "All the code functions should be included and listed using identifiers, in descending order of relevance. The "
    "output format should be [] > [], e.g., [2] > [1]. Only respond with the ranking results, do not give any "
    "explanation.";

CandidateWindow window_of(std::size_t n, std::string issue = "Crash when dividing by zero") {
    CandidateWindow w{std::move(issue), {}};
    for (std::size_t i = 1; i <= n; ++i) {
        w.candidates.push_back({static_cast<int>(i), "u" + std::to_string(i), "def f" + std::to_string(i) + "(): pass"});
    }
    return w;
}

struct Pool {
    Corpus corpus;
    RankedList ranked;
};

Pool pool_of(std::size_t n) {
    std::vector<CodeUnit> units;
    RankedList ranked{"q", {}, n};
    for (std::size_t i = 0; i < n; ++i) {
        char name[16];
        std::snprintf(name, sizeof(name), "f%03zu", i);
        units.push_back(testing::make_unit("m.py", name, static_cast<int>(i * 2 + 1), std::string("def ") + name + "(): pass"));
        ranked.items.push_back({units.back().id, 1.0 - static_cast<double>(i) / static_cast<double>(n)});
    }
    return {Corpus("r", units), ranked};
}

bool is_permutation_of_1_to_n(const std::vector<int>& order, int n) {
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expected(static_cast<std::size_t>(n));
    std::iota(expected.begin(), expected.end(), 1);
    return sorted == expected;
}

} // namespace

TEST_CASE("prompt renders the ranking template exactly") {
    const auto prompt = build_rerank_prompt(window_of(2, "Issue text"));
    CHECK(prompt.system == kSystem);
    const std::string expected =
        std::string("I will provide you with 2 code functions, each indicated by a numerical identifier []. Rank the "
                    "code functions based on their relevance to containing the faults causing the following GitHub "
                    "issue:\nIssue text\n\n### Code Functions\n\n[1]: def f1(): pass\n[2]: def f2(): pass\n\n"
                    "### Response Format\n\n") +
        kResponseFormat;
    CHECK(prompt.user == expected);
    const auto messages = prompt.messages();
    REQUIRE(messages.size() == 2);
    CHECK(messages[0].role == "system");
    CHECK(messages[1].role == "user");
}

TEST_CASE("ten candidates give ten identifiers in order") {
    const auto prompt = build_rerank_prompt(window_of(10));
    std::size_t pos = 0;
    for (int i = 1; i <= 10; ++i) {
        const auto marker = "\n[" + std::to_string(i) + "]: ";
        const auto at = prompt.user.find(marker, pos);
        REQUIRE(at != std::string::npos);
        pos = at + 1;
    }
    CHECK(prompt.user.find("[11]: ") == std::string::npos);
    CHECK(prompt.user.find("I will provide you with 10 code functions") == 0);
    CHECK(split_rerank_candidates(prompt.user).size() == 10);
    CHECK(split_rerank_candidates(prompt.user)[9] == "def f10(): pass");
}

TEST_CASE("prompt guards") {
    CHECK_THROWS_AS(build_rerank_prompt(window_of(2, "   ")), Error);
    CHECK_THROWS_AS(build_rerank_prompt(window_of(0)), Error);
    CHECK_THROWS_AS(build_rerank_prompt(window_of(11)), Error);
    auto bad = window_of(3);
    bad.candidates[1].ident = 5;
    CHECK_THROWS_AS(build_rerank_prompt(bad), Error);
}

TEST_CASE("long candidates are truncated with a marker") {
    const std::string longer(kCandidateCharBudget + 50, 'x');
    const auto cut = truncate_candidate(longer);
    CHECK(cut.size() == kCandidateCharBudget + std::string_view(kTruncationMarker).size());
    CHECK(cut.ends_with(kTruncationMarker));
    CHECK(truncate_candidate("short") == "short");
    const std::string exact(kCandidateCharBudget, 'y');
    CHECK(truncate_candidate(exact) == exact);
}

TEST_CASE("parse_ranking examples") {
    CHECK(parse_ranking("[2] > [1]", 2).order == std::vector<int>{2, 1});
    CHECK(parse_ranking("[1] > [1] > [2]", 3).order == std::vector<int>{1, 2, 3});
    CHECK(parse_ranking("Ranking: [3] > [9] > [0] > [1]", 3).order == std::vector<int>{3, 1, 2});
    CHECK(parse_ranking("[2]>[1]>[4]>[3]", 4).order == std::vector<int>{2, 1, 4, 3});
    CHECK_THROWS_AS(parse_ranking("garbage", 5), Error);
    CHECK_THROWS_AS(parse_ranking("[7] > [8]", 5), Error);
    CHECK_THROWS_AS(parse_ranking("[99999999999999999999]", 5), Error);
    CHECK_THROWS_AS(parse_ranking("[1]", 0), Error);
}

TEST_CASE("parse_ranking always yields a full permutation or a parse error") {
    std::mt19937_64 rng(11);
    const std::string alphabet = "[]>0123456789 ,x\n";
    for (int trial = 0; trial < 2000; ++trial) {
        const int n = static_cast<int>(rng() % 10) + 1;
        std::string response;
        const auto len = rng() % 40;
        for (std::size_t i = 0; i < len; ++i) {
            response.push_back(alphabet[rng() % alphabet.size()]);
        }
        std::optional<RankingPermutation> parsed;
        try {
            parsed = parse_ranking(response, n);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::parse);
            continue;
        }
        CHECK(is_permutation_of_1_to_n(parsed->order, n));
    }
}

TEST_CASE("sliding window: one candidate needs no backend call") {
    auto pool = pool_of(1);
    ScriptedChat chat(identity_ranker());
    const auto out = rerank_sliding({"q", "issue"}, pool.ranked, pool.corpus, chat);
    CHECK(out == pool.ranked);
    CHECK(chat.calls() == 0);
}

TEST_CASE("sliding window: ten candidates reversed by the backend") {
    auto pool = pool_of(10);
    ScriptedChat chat(reverse_ranker());
    const auto out = rerank_sliding({"q", "issue"}, pool.ranked, pool.corpus, chat);
    auto ids = pool.ranked.ids();
    std::reverse(ids.begin(), ids.end());
    CHECK(out.ids() == ids);
    CHECK(chat.calls() == 1);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(out.items[i].score == pool.ranked.items[i].score);
    }
}

TEST_CASE("sliding window: identity on 100 candidates is byte-exact") {
    auto pool = pool_of(100);
    ScriptedChat chat(identity_ranker());
    const auto out = rerank_sliding({"q", "issue"}, pool.ranked, pool.corpus, chat);
    CHECK(out == pool.ranked);
    // Windows end at 100, 95, ..., 10: 19 calls.
    CHECK(chat.calls() == 19);
}

TEST_CASE("sliding window: hand-traced reverse pass over 15 candidates") {
    // Window [5,15) reversed: positions 5..14 hold 14..5.
    // Window [0,10) then sees 0,1,2,3,4,14,13,12,11,10 and reverses it:
    // 10,11,12,13,14,4,3,2,1,0 followed by 9,8,7,6,5.
    auto pool = pool_of(15);
    ScriptedChat chat(reverse_ranker());
    const auto out = rerank_sliding({"q", "issue"}, pool.ranked, pool.corpus, chat);
    const std::vector<int> expected = {10, 11, 12, 13, 14, 4, 3, 2, 1, 0, 9, 8, 7, 6, 5};
    std::vector<std::string> ids;
    for (int i : expected) {
        ids.push_back(pool.ranked.items[static_cast<std::size_t>(i)].id);
    }
    CHECK(out.ids() == ids);
}

TEST_CASE("sliding window output is a permutation for every window/stride") {
    std::mt19937_64 rng(5);
    for (std::size_t window = 2; window <= 10; ++window) {
        for (std::size_t stride = 1; stride <= window; ++stride) {
            const auto n = static_cast<std::size_t>(rng() % 40) + 1;
            auto pool = pool_of(n);
            ScriptedChat chat([&rng](std::span<const ChatMessage> messages) {
                const auto size = split_rerank_candidates(messages.back().content).size();
                std::vector<int> order(size);
                std::iota(order.begin(), order.end(), 1);
                std::shuffle(order.begin(), order.end(), rng);
                std::string out;
                for (int v : order) {
                    out += "[" + std::to_string(v) + "] ";
                }
                return out;
            });
            const auto out = rerank_sliding({"q", "issue"}, pool.ranked, pool.corpus, chat, {window, stride});
            auto a = out.ids();
            auto b = pool.ranked.ids();
            std::sort(a.begin(), a.end());
            std::sort(b.begin(), b.end());
            CHECK(a == b);
        }
    }
    auto pool = pool_of(5);
    ScriptedChat chat(identity_ranker());
    CHECK_THROWS_AS(rerank_sliding({"q", "i"}, pool.ranked, pool.corpus, chat, {11, 5}), Error);
    CHECK_THROWS_AS(rerank_sliding({"q", "i"}, pool.ranked, pool.corpus, chat, {10, 0}), Error);
}

TEST_CASE("a failing window keeps its order and is reported") {
    auto pool = pool_of(15);
    int call = 0;
    ScriptedChat chat([&call](std::span<const ChatMessage> messages) -> std::string {
        if (call++ == 0) {
            return "no ranking here";
        }
        return reverse_ranking(split_rerank_candidates(messages.back().content).size());
    });
    Diagnostics diag;
    const auto out = rerank_sliding({"q", "issue"}, pool.ranked, pool.corpus, chat, {}, &diag);
    // First window [5,15) unchanged; second window [0,10) reversed.
    const std::vector<int> expected = {9, 8, 7, 6, 5, 4, 3, 2, 1, 0, 10, 11, 12, 13, 14};
    std::vector<std::string> ids;
    for (int i : expected) {
        ids.push_back(pool.ranked.items[static_cast<std::size_t>(i)].id);
    }
    CHECK(out.ids() == ids);
    CHECK(diag.size() == 1);

    auto down = ScriptedChat::sequence({});
    Diagnostics down_diag;
    CHECK(rerank_sliding({"q", "issue"}, pool.ranked, pool.corpus, *down, {}, &down_diag) == pool.ranked);
    CHECK(down_diag.size() == 2);
}

TEST_CASE("keyword ranker moves matching candidates to the front") {
    auto w = window_of(4);
    w.candidates[2].text = "def divide(a, b): return a / b";
    const auto prompt = build_rerank_prompt(w);
    const auto ranker = keyword_ranker({"DIVIDE"});
    const auto messages = prompt.messages();
    CHECK(ranker(messages) == "[3] > [1] > [2] > [4]");
}

TEST_CASE("training instance: labels follow the shuffled positive") {
    std::vector<CandidateText> one = {{"pos", "def pos(): pass"}};
    const auto single = make_rerank_train_instance("issue", "pos", one, 42);
    CHECK(single.label == 1);

    std::vector<CandidateText> candidates;
    for (int i = 0; i < 10; ++i) {
        candidates.push_back({"id" + std::to_string(i), "def f" + std::to_string(i) + "(): return " + std::to_string(i)});
    }
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto inst = make_rerank_train_instance("issue", "id3", candidates, seed);
        REQUIRE(inst.candidates.size() == 10);
        CHECK(inst.candidates[static_cast<std::size_t>(inst.label - 1)].unit_id == "id3");
        CHECK(inst.prompt().user == build_rerank_prompt({"issue", inst.candidates}).user);
    }
    CHECK_THROWS_AS(make_rerank_train_instance("issue", "missing", candidates, 1), Error);
    candidates.push_back({"id10", "x"});
    CHECK_THROWS_AS(make_rerank_train_instance("issue", "id3", candidates, 1), Error);
    std::vector<CandidateText> dup = {{"a", "x"}, {"a", "y"}};
    CHECK_THROWS_AS(make_rerank_train_instance("issue", "a", dup, 1), Error);
}

TEST_CASE("training instance for seed 42 matches the frozen golden file") {
    const auto corpus = extract_functions(testing::data_dir() / "fixture_repo", all_languages());
    std::vector<CandidateText> candidates;
    for (const auto& u : corpus.units()) {
        candidates.push_back({u.id, u.text});
    }
    for (int i = 0; i < 3; ++i) {
        candidates.push_back({"extra/pad.py::pad" + std::to_string(i) + "::1", "def pad" + std::to_string(i) + "(): pass"});
    }
    const auto inst = make_rerank_train_instance("Division by zero crashes the calculator",
                                                 "calc/core.py::Calculator.divide::5", candidates, 42);
    const auto line = rerank_instance_to_json(inst) + "\n";
    testing::check_golden("rerank_seed42.jsonl", line);
    CHECK(make_rerank_train_instance("Division by zero crashes the calculator", "calc/core.py::Calculator.divide::5",
                                     candidates, 42) == inst);
    CHECK(rerank_instance_from_json(line) == inst);
    CHECK(inst.candidates[static_cast<std::size_t>(inst.label - 1)].unit_id == "calc/core.py::Calculator.divide::5");
}

TEST_CASE("seeded permutation is a deterministic, roughly uniform shuffle") {
    CHECK(seeded_permutation(0, 1).empty());
    CHECK(seeded_permutation(1, 1) == std::vector<std::size_t>{0});
    CHECK(seeded_permutation(10, 42) == seeded_permutation(10, 42));
    CHECK(seeded_permutation(10, 42) != seeded_permutation(10, 43));
    // Position of element 0 over many seeds: each of 4 slots near 1/4.
    std::array<int, 4> counts{};
    for (std::uint64_t seed = 0; seed < 4000; ++seed) {
        const auto p = seeded_permutation(4, seed);
        ++counts[static_cast<std::size_t>(std::find(p.begin(), p.end(), 0) - p.begin())];
    }
    for (int c : counts) {
        CHECK(c > 850);
        CHECK(c < 1150);
    }
}
