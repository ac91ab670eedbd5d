#include "locrank/language.hpp"
#include "locrank/text.hpp"

#include <doctest.h>

using namespace locrank;

TEST_CASE("fnv1a64 matches published test vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("word_tokens lowercases and splits on non-alphanumerics") {
    CHECK(word_tokens("Open_File(path) -> OK!") == std::vector<std::string>{"open", "file", "path", "ok"});
    CHECK(word_tokens("  ").empty());
    CHECK(word_tokens("x1y2") == std::vector<std::string>{"x1y2"});
    // Non-ASCII bytes stay inside tokens.
    CHECK(word_tokens("caf\xc3\xa9 bar") == std::vector<std::string>{"caf\xc3\xa9", "bar"});
}

TEST_CASE("utf8_prefix never splits a multi-byte sequence") {
    const std::string s = "ab\xc3\xa9";  // 'é' occupies bytes 2..3
    CHECK(utf8_prefix(s, 3) == "ab");
    CHECK(utf8_prefix(s, 4) == s);
    CHECK(utf8_prefix(s, 2) == "ab");
}

TEST_CASE("case-insensitive helpers") {
    CHECK(iequals("Test", "tEST"));
    CHECK_FALSE(iequals("Test", "Tests"));
    CHECK(icontains("src/UnitTests/x.py", "test"));
    CHECK_FALSE(icontains("src/core.py", "test"));
    CHECK(trim("  x y \n") == "x y");
    CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("language names and extensions") {
    for (auto lang : kAllLanguages) {
        CHECK(parse_language(language_name(lang)) == lang);
    }
    CHECK(parse_language("c++") == Language::cpp);
    CHECK(parse_language("cobol") == std::nullopt);
    CHECK(language_for_extension(".h") == Language::c);
    CHECK(language_for_extension(".hpp") == Language::cpp);
    CHECK(language_for_extension(".tsx") == std::nullopt);
    CHECK(language_for_extension(".rb") == Language::ruby);
    CHECK(all_languages().size() == 10);
}
