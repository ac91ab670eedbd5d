#include "locrank/corpus.hpp"
#include "support.hpp"

#include <doctest.h>

#include <set>

using namespace locrank;
using testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> ids_of(const Corpus& corpus) {
    std::vector<std::string> out;
    for (const auto& u : corpus.units()) {
        out.push_back(u.id);
    }
    return out;
}

std::vector<std::string> file_lines(const fs::path& path) {
    std::vector<std::string> lines;
    std::string current;
    for (char c : read_file(path)) {
        if (c == '\n') {
            lines.push_back(current);
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) {
        lines.push_back(current);
    }
    return lines;
}

} // namespace

TEST_CASE("empty repository gives an empty corpus") {
    TempDir dir;
    const auto corpus = extract_functions(dir.path(), all_languages());
    CHECK(corpus.empty());
    CHECK(corpus.language_histogram().empty());
}

TEST_CASE("a single top-level function") {
    TempDir dir;
    testing::write(dir / "m.py", "def f(): pass\n");
    const auto corpus = extract_functions(dir.path(), all_languages());
    REQUIRE(corpus.size() == 1);
    const auto& u = corpus.units()[0];
    CHECK(u.id == "m.py::f::1");
    CHECK(u.start_line == 1);
    CHECK(u.end_line == 1);
    CHECK(u.text == "def f(): pass");
}

TEST_CASE("fixture repository matches the hand-enumerated function list") {
    const auto corpus = extract_functions(testing::data_dir() / "fixture_repo", all_languages(), {.repo = "fixture"});
    const std::vector<std::string> expected = {
        "calc/core.py::Calculator.add::2",
        "calc/core.py::Calculator.divide::5",
        "calc/core.py::parse_expression::9",
        "calc/format.py::format_result::1",
        "calc/format.py::format_error::5",
        "web/app.js::handleRequest::1",
        "web/app.js::validateInput::6",
    };
    CHECK(ids_of(corpus) == expected);
    CHECK(corpus.repo() == "fixture");
    CHECK(corpus.language_histogram().at(Language::python) == 5);
    CHECK(corpus.language_histogram().at(Language::javascript) == 2);
}

TEST_CASE("language filter restricts the files considered") {
    const auto corpus = extract_functions(testing::data_dir() / "fixture_repo", {Language::javascript});
    CHECK(ids_of(corpus) == std::vector<std::string>{"web/app.js::handleRequest::1", "web/app.js::validateInput::6"});
}

TEST_CASE("all ten grammars extract the expected units") {
    Diagnostics diag;
    const auto corpus = extract_functions(testing::data_dir() / "multilang", all_languages(), {}, &diag);
    const std::set<std::string> expected = {
        "Router.php::Router.dispatch::5",
        "Router.php::boot::10",
        "Store.java::Store.Store::6",
        "Store.java::Store.capacity::10",
        "Store.java::Store.Entry.key::15",
        "broken.py::ok::1",
        "broken.py::broken::5",
        "buffer.c::grow::3",
        "buffer.c::buffer_new::7",
        "cache.rb::Storage.Cache.fetch::3",
        "cache.rb::Storage.Cache.build::7",
        "events.js::Emitter.emit::2",
        "events.js::onClick::8",
        "lib.rs::Counter.bump::6",
        "lib.rs::helper::11",
        "matrix.cpp::linalg.Matrix.rows::5",
        "matrix.cpp::linalg.Matrix_trace::13",
        "server.go::Server.Start::5",
        "server.go::main::9",
        "server.go::main.handler::10",
        "shapes.ts::Circle.constructor::6",
        "shapes.ts::Circle.area::8",
        "shapes.ts::scale::13",
    };
    const auto got = ids_of(corpus);
    CHECK(std::set<std::string>(got.begin(), got.end()) == expected);
    CHECK(corpus.language_histogram().size() == 10);
    // broken.py has a syntax error: partial extraction is reported.
    CHECK(diag.size() == 1);
}

TEST_CASE("span soundness: every unit text is its file slice") {
    for (const char* repo : {"fixture_repo", "multilang"}) {
        const auto root = testing::data_dir() / repo;
        const auto corpus = extract_functions(root, all_languages());
        for (const auto& u : corpus.units()) {
            const auto lines = file_lines(root / u.path);
            REQUIRE(u.start_line >= 1);
            REQUIRE(u.start_line <= u.end_line);
            REQUIRE(static_cast<std::size_t>(u.end_line) <= lines.size());
            std::string slice;
            for (int i = u.start_line; i <= u.end_line; ++i) {
                if (i > u.start_line) {
                    slice += '\n';
                }
                slice += lines[static_cast<std::size_t>(i - 1)];
            }
            CHECK_MESSAGE(slice == u.text, u.id);
            CHECK(u.id == make_unit_id(u.path, u.qualified_name, u.start_line));
        }
    }
}

TEST_CASE("nested functions each get their own unit") {
    TempDir dir;
    testing::write(dir / "n.py", "def outer():\n    def inner():\n        return 1\n    return inner\n");
    testing::write(dir / "n.js", "function a() {\n  const b = () => 1;\n  return b;\n}\n");
    const auto corpus = extract_functions(dir.path(), all_languages());
    CHECK(ids_of(corpus) ==
          std::vector<std::string>{"n.js::a::1", "n.js::a.b::2", "n.py::outer::1", "n.py::outer.inner::2"});
}

TEST_CASE("unnamed function literals are named by line") {
    TempDir dir;
    testing::write(dir / "cb.js", "run(function () {\n  return 1;\n});\n");
    const auto corpus = extract_functions(dir.path(), all_languages());
    CHECK(ids_of(corpus) == std::vector<std::string>{"cb.js::<anon@1>::1"});
}

TEST_CASE("units sorted by (path, start_line); histogram sums to size") {
    const auto corpus = extract_functions(testing::data_dir() / "multilang", all_languages());
    for (std::size_t i = 1; i < corpus.size(); ++i) {
        const auto& a = corpus.units()[i - 1];
        const auto& b = corpus.units()[i];
        CHECK(std::tie(a.path, a.start_line) <= std::tie(b.path, b.start_line));
    }
    std::size_t total = 0;
    for (const auto& [lang, n] : corpus.language_histogram()) {
        total += n;
    }
    CHECK(total == corpus.size());
}

TEST_CASE("extraction is byte-identical across runs and worker counts") {
    const auto root = testing::data_dir() / "multilang";
    const auto a = serialize_corpus(extract_functions(root, all_languages(), {.jobs = 1}));
    const auto b = serialize_corpus(extract_functions(root, all_languages(), {.jobs = 1}));
    const auto c = serialize_corpus(extract_functions(root, all_languages(), {.jobs = 4}));
    CHECK(a == b);
    CHECK(a == c);
}

TEST_CASE("oversized files are skipped with a warning") {
    TempDir dir;
    testing::write(dir / "big.py", "def f():\n    return 1\n" + std::string(200, '#') + "\n");
    testing::write(dir / "small.py", "def g():\n    return 2\n");
    Diagnostics diag;
    const auto corpus = extract_functions(dir.path(), all_languages(), {.max_file_bytes = 100}, &diag);
    CHECK(ids_of(corpus) == std::vector<std::string>{"small.py::g::1"});
    CHECK(diag.size() == 1);

    Diagnostics lines_diag;
    const auto by_lines = extract_functions(dir.path(), all_languages(), {.max_file_lines = 2}, &lines_diag);
    CHECK(ids_of(by_lines) == std::vector<std::string>{"small.py::g::1"});
    CHECK(lines_diag.size() == 1);
}

TEST_CASE("hidden directories are not indexed") {
    TempDir dir;
    testing::write(dir / ".git/hooks/x.py", "def hook():\n    pass\n");
    testing::write(dir / "a.py", "def a():\n    pass\n");
    CHECK(ids_of(extract_functions(dir.path(), all_languages())) == std::vector<std::string>{"a.py::a::1"});
}

TEST_CASE("slice_unit") {
    const auto corpus = extract_functions(testing::data_dir() / "fixture_repo", all_languages());
    CHECK(slice_unit(corpus, "calc/format.py::format_error::5").qualified_name == "format_error");
    CHECK_THROWS_AS(slice_unit(corpus, "nope"), Error);
    try {
        slice_unit(corpus, "nope");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::not_found);
    }
    // The first unit has the minimal (path, start_line).
    const auto& first = corpus.units().front();
    for (const auto& u : corpus.units()) {
        CHECK(std::tie(first.path, first.start_line) <= std::tie(u.path, u.start_line));
    }
    CHECK(slice_unit(corpus, first.id) == first);
}

TEST_CASE("corpus JSONL round trip") {
    TempDir dir;
    const auto corpus = extract_functions(testing::data_dir() / "multilang", all_languages(), {.repo = "multi"});
    save_corpus(corpus, dir / "c.jsonl");
    const auto text = read_file(dir / "c.jsonl");
    CHECK(text.rfind("{\"format\":\"locrank-corpus\",\"version\":1}\n", 0) == 0);
    const auto loaded = load_corpus(dir / "c.jsonl");
    CHECK(loaded.repo() == "multi");
    CHECK(loaded.units() == corpus.units());
    CHECK(serialize_corpus(loaded) == text);

    CHECK_THROWS_AS(parse_corpus("{\"format\":\"other\",\"version\":1}\n"), Error);
    CHECK(parse_corpus(serialize_corpus(Corpus("r", {}))).empty());
}

TEST_CASE("duplicate unit ids are rejected") {
    const auto u = testing::make_unit("a.py", "f", 1, "def f(): pass");
    CHECK_THROWS_AS(Corpus("r", {u, u}), Error);
}
