#include "locrank/agent.hpp"
#include "agent_fixture.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace locrank;
using testing::AgentRig;
using testing::finish_reply;
using testing::search_reply;

namespace {

const Corpus& corpus() {
    static const Corpus c = testing::topic_corpus({{"alpha", 10}, {"beta", 10}, {"gamma", 6}});
    return c;
}

// Oracle for one search with the identity reranker: the retrieval head.
std::vector<std::string> expected_search(const std::string& query, std::size_t k = 10) {
    MockEmbedder mock;
    EmbeddingCache cache(mock.id());
    return retrieve_topk({"oracle", query}, corpus(), mock, cache, k).ids();
}

std::vector<std::string> ids_with_prefix(const std::string& prefix) {
    std::vector<std::string> out;
    for (const auto& u : corpus().units()) {
        if (u.path == "src/" + prefix + ".py") {
            out.push_back(u.id);
        }
    }
    return out;
}

} // namespace

TEST_CASE("system prompt carries the tool descriptions and response format") {
    const auto prompt = agent_system_prompt();
    CHECK(prompt.find("You are an intelligent assistant specializing in software issue localization.") == 0);
    CHECK(prompt.find("\"name\": \"search\"") != std::string::npos);
    CHECK(prompt.find("\"name\": \"finish\"") != std::string::npos);
    CHECK(prompt.find("\"parameters\": \"issue_description\"") != std::string::npos);
    CHECK(prompt.find("Your response MUST follow this format:") != std::string::npos);
    CHECK(prompt.ends_with("ACTION:\n{\"name\": \"...\", \"arguments\": { ... }}"));
}

TEST_CASE("parse_agent_response") {
    const auto finish = parse_agent_response(
        "THOUGHT: all found\nREFORMULATION: n/a\nACTION:\n{\"name\":\"finish\",\"arguments\":null}");
    CHECK(finish.action.name == ToolName::finish);
    CHECK(finish.thought == "all found");
    CHECK(finish.reformulation == "n/a");

    const auto search = parse_agent_response(
        "**THOUGHT:** the parser\nspans lines\n\nREFORMULATION: narrower\nACTION: {\"name\": \"search\", "
        "\"arguments\": {\"issue_description\": \"tokenizer {brace} \\\"quoted\\\"\"}} trailing");
    CHECK(search.action.name == ToolName::search);
    CHECK(search.action.issue_description() == "tokenizer {brace} \"quoted\"");
    CHECK(search.thought == "the parser\nspans lines");

    const auto code_of = [](const std::string& text) {
        try {
            parse_agent_response(text);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::io;
    };
    CHECK(code_of("THOUGHT: no action here") == ErrorCode::malformed_response);
    CHECK(code_of("ACTION: not json") == ErrorCode::malformed_response);
    CHECK(code_of("ACTION: {\"name\": \"search\", ") == ErrorCode::malformed_response);
    CHECK(code_of("ACTION: {\"arguments\": {}}") == ErrorCode::malformed_response);
    CHECK(code_of("ACTION: {\"name\": \"grep\", \"arguments\": {}}") == ErrorCode::unknown_tool);
    CHECK(code_of("ACTION: {\"name\": \"search\", \"arguments\": {\"issue_description\": \"  \"}}") ==
          ErrorCode::invalid_arguments);
    CHECK(code_of("ACTION: {\"name\": \"search\", \"arguments\": null}") == ErrorCode::invalid_arguments);
}

TEST_CASE("finish on turn 1: memory stays empty and the fallback is single-pass") {
    AgentRig rig({finish_reply()});
    auto b = rig.backends();
    const AgentConfig config;
    const Query issue{"i1", "alpha"};
    auto state = step(AgentState(issue, config), corpus(), config, b);
    CHECK(state.terminated());
    CHECK(state.stop == StopReason::finish);
    CHECK(state.memory().empty());

    AgentRig run_rig({finish_reply()});
    auto rb = run_rig.backends();
    const auto result = run_agent(issue, corpus(), config, rb);
    CHECK(result.used_fallback);
    AgentRig single_rig({});
    auto sb = single_rig.backends();
    CHECK(result.ranking == single_pass(issue, corpus(), config, sb));
    CHECK(run_rig.diagnostics.size() == 1);
}

TEST_CASE("a search that overlaps memory adds only the new ids") {
    const auto first = expected_search("alpha");
    const auto second = expected_search("gamma u0 u1 u2 u3");
    std::size_t overlap = 0;
    for (const auto& id : second) {
        overlap += std::count(first.begin(), first.end(), id);
    }
    REQUIRE(second.size() == 10);
    REQUIRE(overlap > 0);
    REQUIRE(overlap < 10);

    AgentRig rig({search_reply("alpha"), search_reply("gamma u0 u1 u2 u3")});
    auto b = rig.backends();
    const AgentConfig config;
    auto state = step(AgentState({"i", "issue"}, config), corpus(), config, b);
    CHECK(state.memory().size() == 10);
    state = step(std::move(state), corpus(), config, b);
    CHECK(state.memory().size() == 20 - overlap);
    CHECK(state.transcript.back().new_ids.size() == 10 - overlap);
    CHECK(state.stop == StopReason::running);
}

TEST_CASE("three-turn trajectory: memory is the ordered union of the results") {
    AgentRig rig({search_reply("alpha"), search_reply("beta"), search_reply("gamma"), finish_reply()});
    auto b = rig.backends();
    const AgentConfig config;
    auto result = run_agent({"i", "something about alpha"}, corpus(), config, b);

    std::vector<std::string> oracle;
    for (const auto* q : {"alpha", "beta", "gamma"}) {
        for (const auto& id : expected_search(q)) {
            if (std::find(oracle.begin(), oracle.end(), id) == oracle.end()) {
                oracle.push_back(id);
            }
        }
    }
    CHECK(result.state.memory() == oracle);
    CHECK(result.state.stop == StopReason::finish);
    CHECK(result.state.turn == 4);
    CHECK(result.state.queries == std::vector<std::string>{"alpha", "beta", "gamma"});
    CHECK_FALSE(result.used_fallback);
}

TEST_CASE("two disjoint searches with identity rerank return the memory head") {
    AgentRig rig({search_reply("alpha"), search_reply("beta"), finish_reply()});
    auto b = rig.backends();
    const AgentConfig config;
    const auto result = run_agent({"i", "alpha beta"}, corpus(), config, b);
    REQUIRE(result.state.memory().size() == 20);
    const std::vector<std::string> head(result.state.memory().begin(), result.state.memory().begin() + 10);
    CHECK(result.ranking.ids() == head);
    CHECK(result.ranking.ids() == ids_with_prefix("alpha"));
}

TEST_CASE("repeating a query stops the loop before max_turns") {
    AgentRig rig({search_reply("beta"), search_reply("beta"), search_reply("gamma")});
    auto b = rig.backends();
    const AgentConfig config;
    const auto result = run_agent({"i", "beta"}, corpus(), config, b);
    CHECK(result.state.stop == StopReason::no_new_ids);
    CHECK(result.state.turn == 2);
    CHECK(result.state.turn < config.max_turns);
    CHECK(result.state.memory().size() == 10);
}

TEST_CASE("max_turns bounds the loop") {
    AgentRig rig({search_reply("alpha"), search_reply("beta"), search_reply("gamma")});
    auto b = rig.backends();
    AgentConfig config;
    config.max_turns = 2;
    const auto result = run_agent({"i", "x y"}, corpus(), config, b);
    CHECK(result.state.stop == StopReason::max_turns);
    CHECK(result.state.turn == 2);
    CHECK(rig.agent_chat->calls() == 2);
}

TEST_CASE("malformed responses: one re-prompt, then the turn finishes") {
    AgentRig rig({"I think alpha", search_reply("alpha"), "nonsense", "still nonsense"});
    auto b = rig.backends();
    const AgentConfig config;
    const auto result = run_agent({"i", "alpha"}, corpus(), config, b);
    REQUIRE(result.state.transcript.size() == 2);
    CHECK(result.state.transcript[0].reprompted);
    CHECK(result.state.transcript[0].action == "search");
    CHECK(result.state.transcript[1].reprompted);
    CHECK(result.state.transcript[1].action.empty());
    CHECK_FALSE(result.state.transcript[1].error.empty());
    CHECK(result.state.stop == StopReason::malformed);
    CHECK(rig.agent_chat->calls() == 4);
    CHECK(result.ranking.ids() == ids_with_prefix("alpha"));

    // The re-prompt quotes the parse error back to the model.
    const auto history = rig.agent_chat->history();
    REQUIRE(history.size() == 4);
    CHECK(history[1].back().role == "user");
    CHECK(history[1].back().content.find("no ACTION section") != std::string::npos);
}

TEST_CASE("chat failure stops the loop and falls back when memory is empty") {
    AgentRig rig({});
    auto b = rig.backends();
    const AgentConfig config;
    const auto result = run_agent({"i", "alpha"}, corpus(), config, b);
    CHECK(result.state.stop == StopReason::chat_error);
    CHECK(result.used_fallback);
    CHECK(result.ranking.ids() == ids_with_prefix("alpha"));
}

namespace {

class FussyEmbedder final : public EmbeddingBackend {
public:
    std::string id() const override { return inner.id(); }
    std::size_t dims() const override { return inner.dims(); }
    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override {
        for (const auto& t : texts) {
            if (t.find("explode") != std::string::npos) {
                throw Error(ErrorCode::transport, "embedding service unavailable");
            }
        }
        return inner.embed_batch(texts);
    }
    MockEmbedder inner;
};

} // namespace

TEST_CASE("a failing search is recorded and the loop continues") {
    FussyEmbedder embedder;
    EmbeddingCache cache(embedder.id());
    auto agent_chat = ScriptedChat::sequence({search_reply("explode"), search_reply("gamma"), finish_reply()});
    ScriptedChat rerank(identity_ranker());
    Diagnostics diag;
    AgentBackends b{embedder, cache, *agent_chat, rerank, &diag};
    const AgentConfig config;
    const auto result = run_agent({"i", "gamma"}, corpus(), config, b);
    REQUIRE(result.state.transcript.size() == 3);
    CHECK(result.state.transcript[0].error.find("unavailable") != std::string::npos);
    CHECK(result.state.transcript[0].result_ids.empty());
    CHECK(result.state.transcript[1].new_ids.size() == 10);
    CHECK(result.state.stop == StopReason::finish);
}

TEST_CASE("observations list ids, names, paths and leading lines") {
    AgentRig rig({search_reply("gamma"), finish_reply()});
    auto b = rig.backends();
    AgentConfig config;
    auto state = step(AgentState({"i", "gamma"}, config), corpus(), config, b);
    const auto& obs = state.conversation.back();
    CHECK(obs.role == "user");
    CHECK(obs.content.find("1. src/gamma.py::gamma_00::1 (new)") != std::string::npos);
    CHECK(obs.content.find("   name: gamma_00\n") != std::string::npos);
    CHECK(obs.content.find("   path: src/gamma.py:1-2\n") != std::string::npos);
    CHECK(obs.content.find("Remaining search rounds: 4.") != std::string::npos);
    CHECK(state.conversation[0].role == "system");
    CHECK(state.conversation[1].content == "gamma");
}

TEST_CASE("transcripts are bit-identical across runs") {
    const auto run = [] {
        AgentRig rig({search_reply("alpha"), "garbage", search_reply("beta"), search_reply("beta")});
        auto b = rig.backends();
        const auto result = run_agent({"i", "alpha beta"}, corpus(), AgentConfig{}, b);
        return transcript_to_jsonl(result.state);
    };
    const auto a = run();
    CHECK(a == run());
    CHECK(a == run());
    const auto first_line = a.substr(0, a.find('\n'));
    const auto j = nlohmann::json::parse(first_line);
    CHECK(j.at("turn") == 1);
    CHECK(j.at("action").at("name") == "search");
    CHECK(j.at("action").at("arguments").at("issue_description") == "alpha");
    CHECK(j.at("result_ids").size() == 10);
    CHECK(j.at("error").is_null());
}

TEST_CASE("memory never shrinks and output stays within memory") {
    AgentRig rig({search_reply("alpha"), search_reply("alpha beta"), search_reply("gamma beta"), finish_reply()});
    auto b = rig.backends();
    const AgentConfig config;
    AgentState state({"i", "issue"}, config);
    std::vector<std::string> previous;
    while (!state.terminated()) {
        state = step(std::move(state), corpus(), config, b);
        const auto& now = state.memory();
        REQUIRE(now.size() >= previous.size());
        CHECK(std::equal(previous.begin(), previous.end(), now.begin()));
        previous = now;
        CHECK(state.turn <= config.max_turns);
    }
    std::set<std::string> unique(previous.begin(), previous.end());
    CHECK(unique.size() == previous.size());
}

TEST_CASE("reformulation baseline") {
    const AgentConfig config;
    const Query issue{"i", "alpha"};
    {
        AgentRig rig({});
        auto b = rig.backends();
        const auto single = single_pass(issue, corpus(), config, b);
        ScriptedChat copies([](auto) { return R"(["alpha", "alpha", "alpha", "alpha", "alpha"])"; });
        CHECK(reformulate_baseline(issue, corpus(), config, b, copies).ids() == single.ids());
        auto broken = ScriptedChat::sequence({});
        CHECK(reformulate_baseline(issue, corpus(), config, b, *broken).ids() == single.ids());
        CHECK(rig.diagnostics.size() == 1);
    }
    {
        AgentRig rig({});
        auto b = rig.backends();
        ScriptedChat other([](auto) { return "1. beta\n2. beta"; });
        const auto out = reformulate_baseline(issue, corpus(), config, b, other);
        CHECK(out.ids() == ids_with_prefix("alpha"));
        CHECK(out.items.size() == 10);
    }
    CHECK(parse_reformulations("[\"a\", \"b\", 3, \"c\"]", 2) == std::vector<std::string>{"a", "b"});
    CHECK(parse_reformulations("- one\n2) two\n\n3. three", 5) == std::vector<std::string>{"one", "two", "three"});
}

TEST_CASE("config validation") {
    AgentConfig c;
    CHECK_NOTHROW(c.validate());
    c.max_turns = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    AgentRig rig({});
    auto b = rig.backends();
    CHECK_THROWS_AS(run_agent({"i", "x"}, Corpus(), AgentConfig{}, b), Error);
}
