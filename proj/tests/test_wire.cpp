#include "locrank/chat.hpp"
#include "locrank/embedding.hpp"
#include "locrank/text.hpp"
#include "loopback.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace locrank;
using namespace std::chrono_literals;

namespace {

std::string wire(const std::string& name) {
    auto text = read_file(testing::data_dir() / "wire" / name);
    while (!text.empty() && text.back() == '\n') {
        text.pop_back();
    }
    return text;
}

const std::vector<std::string> kInputs{"def add(a, b):\n    return a + b", "division by zero"};
const std::vector<ChatMessage> kMessages{
    {"system", "You rank code."},
    {"user", "Issue: crash on \"divide\"\n[1] def divide(a, b):"},
};

RetryPolicy fast_retry(int attempts) { return RetryPolicy{attempts, 1ms}; }

} // namespace

TEST_CASE("embedding request and response match the wire fixtures") {
    CHECK(encode_embedding_request("text-embedding-3-small", kInputs) == wire("embeddings_request.json"));
    const auto vectors = decode_embedding_response(wire("embeddings_response.json"), 2);
    REQUIRE(vectors.size() == 2);
    CHECK(vectors[0].values == std::vector<double>{3.0, 4.0});
    CHECK(vectors[1].values == std::vector<double>{0.0, 2.0});

    CHECK_THROWS_AS(decode_embedding_response(wire("embeddings_response.json"), 3), Error);
    CHECK_THROWS_AS(decode_embedding_response("not json", 1), Error);
    CHECK_THROWS_AS(decode_embedding_response(R"({"data":[{"index":0,"embedding":[1]},{"index":0,"embedding":[2]}]})", 2),
                    Error);
    CHECK_THROWS_AS(
        decode_embedding_response(R"({"data":[{"index":0,"embedding":[1,2]},{"index":1,"embedding":[2]}]})", 2),
        Error);
}

TEST_CASE("chat request and response match the wire fixtures") {
    CHECK(encode_chat_request("gpt-4o-mini", kMessages) == wire("chat_request.json"));
    CHECK(decode_chat_response(wire("chat_response.json")) == "[2] > [1] > [3]");
    CHECK_THROWS_AS(decode_chat_response(R"({"choices":[]})"), Error);
    CHECK_THROWS_AS(decode_chat_response(R"({"choices":[{"message":{}}]})"), Error);
    CHECK_THROWS_AS(decode_chat_response("<html>"), Error);
}

TEST_CASE("remote backends over a loopback server") {
    testing::Loopback loop;
    testing::RequestLog log;
    std::atomic<int> embed_calls{0};
    loop.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        log.add(req);
        if (embed_calls++ == 0) {
            res.status = 503;
            res.set_content("busy", "text/plain");
            return;
        }
        res.set_content(wire("embeddings_response.json"), "application/json");
    });
    loop.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        log.add(req);
        res.set_content(wire("chat_response.json"), "application/json");
    });
    loop.server().Post("/v1/bad/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
        log.add(req);
        res.status = 400;
        res.set_content("{\"error\":\"bad model\"}", "application/json");
    });
    loop.start();

    std::shared_ptr<HttpTransport> transport = make_http_transport({loop.url(), "sk-test", 5s});
    RemoteEmbedder embedder(transport, "text-embedding-3-small", fast_retry(3));
    CHECK(embedder.id() == "remote:text-embedding-3-small");
    const auto vectors = embedder.embed_batch(kInputs);
    REQUIRE(vectors.size() == 2);
    CHECK(vectors[0].values[0] == doctest::Approx(0.6));
    CHECK(vectors[0].values[1] == doctest::Approx(0.8));
    CHECK(vectors[1].values[1] == doctest::Approx(1.0));
    CHECK(embedder.dims() == 2);
    CHECK(embed_calls == 2);

    RemoteChat chat(transport, "gpt-4o-mini", fast_retry(3));
    CHECK(chat.complete(kMessages) == "[2] > [1] > [3]");

    const auto entries = log.entries();
    REQUIRE(entries.size() == 3);
    CHECK(entries[1].path == "/v1/embeddings");
    CHECK(entries[1].authorization == "Bearer sk-test");
    CHECK(entries[1].content_type == "application/json");
    CHECK(entries[1].body == wire("embeddings_request.json"));
    CHECK(entries[2].path == "/v1/chat/completions");
    CHECK(entries[2].body == wire("chat_request.json"));

    RemoteEmbedder bad(make_http_transport({loop.url("/v1/bad"), "", 5s}), "m", fast_retry(3));
    try {
        bad.embed_batch(kInputs);
        FAIL("expected a protocol error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::protocol);
    }
    CHECK(log.entries().size() == 4);
    CHECK(log.entries().back().authorization.empty());
}

TEST_CASE("retries are bounded") {
    testing::Loopback loop;
    std::atomic<int> calls{0};
    loop.server().Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 429;
    });
    loop.start();
    RemoteEmbedder embedder(make_http_transport({loop.url(), "", 5s}), "m", fast_retry(4));
    try {
        embedder.embed_batch(kInputs);
        FAIL("expected a transport error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::transport);
    }
    CHECK(calls == 4);
    loop.stop();

    const auto port_gone = loop.url();
    RemoteChat chat(make_http_transport({port_gone, "", 1s}), "m", fast_retry(2));
    CHECK_THROWS_AS(chat.complete(kMessages), Error);
    CHECK_THROWS_AS(make_http_transport({"localhost:8080", "", 1s}), Error);
}
