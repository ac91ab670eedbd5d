#include "locrank/config.hpp"
#include "locrank/text.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace locrank;

namespace {

EnvLookup fake_env(std::map<std::string, std::string> vars) {
    return [vars = std::move(vars)](const char* name) -> std::optional<std::string> {
        const auto it = vars.find(name);
        return it == vars.end() ? std::nullopt : std::optional<std::string>(it->second);
    };
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::io;
}

} // namespace

TEST_CASE("key-value parser") {
    const auto kv = parse_key_values(R"(# top comment
seed = 7
jobs=2   # trailing comment

[embed]
backend = remote
url = "http://localhost:9000/v1"   # quoted
model = "a \"quoted\" name\twith tab"

[ agent ]
max_turns = 3
)");
    CHECK(kv.size() == 6);
    CHECK(kv.at("seed") == "7");
    CHECK(kv.at("jobs") == "2");
    CHECK(kv.at("embed.backend") == "remote");
    CHECK(kv.at("embed.url") == "http://localhost:9000/v1");
    CHECK(kv.at("embed.model") == "a \"quoted\" name\twith tab");
    CHECK(kv.at("agent.max_turns") == "3");

    CHECK(code_of([] { parse_key_values("[embed\nx = 1"); }) == ErrorCode::config);
    CHECK(code_of([] { parse_key_values("just words"); }) == ErrorCode::config);
    CHECK(code_of([] { parse_key_values("= 1"); }) == ErrorCode::config);
    CHECK(code_of([] { parse_key_values("a = \"open"); }) == ErrorCode::config);
    CHECK(code_of([] { parse_key_values("a = \"x\" y"); }) == ErrorCode::config);
    CHECK(parse_key_values("").empty());
}

TEST_CASE("settings map onto the run configuration") {
    RunConfig c;
    apply_settings(c, {{"retrieve.k", "25"},
                       {"retrieve.rerank", "true"},
                       {"rerank.window", "8"},
                       {"rerank.stride", "4"},
                       {"agent.max_turns", "3"},
                       {"curate.top_n", "30"},
                       {"seed", "99"},
                       {"jobs", "4"}});
    CHECK(c.k == 25);
    CHECK(c.rerank);
    CHECK(c.agent.sliding.window == 8);
    CHECK(c.agent.sliding.stride == 4);
    CHECK(c.agent.max_turns == 3);
    CHECK(c.curation.top_n == 30);
    CHECK(c.seed == 99);
    CHECK(c.curation.seed == 99);
    CHECK(c.jobs == 4);
    CHECK(c.agent.retrieve.jobs == 4);

    CHECK(code_of([&] { apply_setting(c, "retrieve.nonsense", "1"); }) == ErrorCode::config);
    CHECK(code_of([&] { apply_setting(c, "retrieve.k", "0"); }) == ErrorCode::config);
    CHECK(code_of([&] { apply_setting(c, "retrieve.k", "ten"); }) == ErrorCode::config);
    CHECK(code_of([&] { apply_setting(c, "rerank.window", "11"); }) == ErrorCode::config);
    CHECK(code_of([&] { apply_setting(c, "embed.backend", "gpu"); }) == ErrorCode::config);
    CHECK(code_of([&] { apply_setting(c, "retrieve.rerank", "maybe"); }) == ErrorCode::config);
}

TEST_CASE("defaults") {
    const RunConfig c;
    CHECK(c.k == 10);
    CHECK(c.agent.max_turns == 5);
    CHECK(c.agent.retrieve_k == 100);
    CHECK(c.agent.sliding.window == 10);
    CHECK(c.agent.sliding.stride == 5);
    CHECK(c.curation.top_n == 40);
    CHECK(c.curation.negatives == 15);
    CHECK(c.reformulations == 5);
    CHECK(c.embed_model == "text-embedding-3-small");
    CHECK_NOTHROW(validate_config(c));
}

TEST_CASE("precedence: file, then flags, then environment") {
    testing::TempDir dir;
    const auto file = dir / "run.conf";
    testing::write(file, "[retrieve]\nk = 20\nmax_query_chars = 100\n[embed]\nurl = http://file/v1\n");
    const auto env = fake_env({{"LOCRANK_EMBED_URL", "http://env/v1"}, {"LOCRANK_API_KEY", "sk-env"}});

    const auto only_file = resolve_config(file, {}, fake_env({}));
    CHECK(only_file.k == 20);
    CHECK(only_file.embed_url == "http://file/v1");

    const auto flagged = resolve_config(file, {{"retrieve.k", "5"}, {"embed.url", "http://flag/v1"}}, env);
    CHECK(flagged.k == 5);
    CHECK(flagged.agent.retrieve.max_query_chars == 100);
    CHECK(flagged.embed_url == "http://env/v1");
    CHECK(flagged.api_key == "sk-env");

    CHECK(code_of([&] { resolve_config(dir / "missing.conf", {}, fake_env({})); }) != ErrorCode::config);
    CHECK(code_of([&] { resolve_config(std::nullopt, {{"embed.backend", "remote"}}, fake_env({})); }) ==
          ErrorCode::config);
    CHECK_NOTHROW(resolve_config(std::nullopt, {{"embed.backend", "remote"}},
                                 fake_env({{"LOCRANK_EMBED_URL", "http://x/v1"}})));
    CHECK(code_of([&] { resolve_config(std::nullopt, {{"rerank.window", "5"}}, fake_env({})); }) ==
          ErrorCode::config);
}

TEST_CASE("scripted backends from a chat script") {
    testing::TempDir dir;
    const auto script = dir / "script.json";
    testing::write(script, R"({"agent":["first","second"],"rerank":"reverse","reformulate":["[\"q\"]"]})");
    RunConfig c;
    c.chat_script = script;
    Diagnostics diag;
    auto b = make_backends(c, &diag);
    const std::vector<ChatMessage> none;
    CHECK(b.agent_chat->complete(none) == "first");
    CHECK(b.agent_chat->complete(none) == "second");
    CHECK(code_of([&] { b.agent_chat->complete(none); }) == ErrorCode::transport);
    CHECK(b.reformulate_chat->complete(none) == "[\"q\"]");
    CHECK(b.embedder->id() == "mock-fnv256");
    CHECK(b.cache->backend_id() == "mock-fnv256");
    CHECK(b.diagnostics == &diag);

    testing::write(script, R"({"rerank":{"prefer":["divide"]}})");
    auto prefer = make_backends(c);
    CHECK(code_of([&] { prefer.agent_chat->complete(none); }) == ErrorCode::transport);

    testing::write(script, "{not json");
    CHECK(code_of([&] { make_backends(c); }) == ErrorCode::config);

    RunConfig defaults;
    auto plain = make_backends(defaults);
    REQUIRE(plain.rerank_chat != nullptr);
}

TEST_CASE("cache persistence through backends") {
    testing::TempDir dir;
    RunConfig c;
    c.cache_path = dir / "cache.bin";
    {
        auto b = make_backends(c);
        const std::vector<std::string> texts{"alpha beta"};
        embed_cached(*b.embedder, *b.cache, texts);
        b.persist(c);
    }
    CHECK(std::filesystem::exists(c.cache_path));
    auto again = make_backends(c);
    CHECK(again.cache->size() == 1);
}
