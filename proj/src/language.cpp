#include "locrank/language.hpp"

#include "locrank/text.hpp"

#include <utility>

namespace locrank {

std::string_view language_name(Language lang) noexcept {
    switch (lang) {
    case Language::python: return "python";
    case Language::javascript: return "javascript";
    case Language::typescript: return "typescript";
    case Language::java: return "java";
    case Language::ruby: return "ruby";
    case Language::rust: return "rust";
    case Language::go: return "go";
    case Language::php: return "php";
    case Language::c: return "c";
    case Language::cpp: return "cpp";
    }
    return "unknown";
}

std::optional<Language> parse_language(std::string_view name) noexcept {
    static constexpr std::pair<std::string_view, Language> aliases[] = {
        {"python", Language::python},     {"py", Language::python},
        {"javascript", Language::javascript}, {"js", Language::javascript},
        {"typescript", Language::typescript}, {"ts", Language::typescript},
        {"java", Language::java},         {"ruby", Language::ruby},
        {"rb", Language::ruby},           {"rust", Language::rust},
        {"rs", Language::rust},           {"go", Language::go},
        {"golang", Language::go},         {"php", Language::php},
        {"c", Language::c},               {"cpp", Language::cpp},
        {"c++", Language::cpp},           {"cxx", Language::cpp},
    };
    for (const auto& [alias, lang] : aliases) {
        if (iequals(alias, name)) {
            return lang;
        }
    }
    return std::nullopt;
}

std::optional<Language> language_for_extension(std::string_view ext) noexcept {
    static constexpr std::pair<std::string_view, Language> table[] = {
        {".py", Language::python},
        {".js", Language::javascript}, {".jsx", Language::javascript},
        {".mjs", Language::javascript}, {".cjs", Language::javascript},
        {".ts", Language::typescript}, {".mts", Language::typescript},
        {".cts", Language::typescript},
        {".java", Language::java},
        {".rb", Language::ruby},
        {".rs", Language::rust},
        {".go", Language::go},
        {".php", Language::php},
        {".c", Language::c}, {".h", Language::c},
        {".cc", Language::cpp}, {".cpp", Language::cpp}, {".cxx", Language::cpp},
        {".c++", Language::cpp}, {".hh", Language::cpp}, {".hpp", Language::cpp},
        {".hxx", Language::cpp}, {".h++", Language::cpp},
    };
    for (const auto& [e, lang] : table) {
        if (e == ext) {
            return lang;
        }
    }
    return std::nullopt;
}

LanguageSet all_languages() {
    return LanguageSet(kAllLanguages.begin(), kAllLanguages.end());
}

} // namespace locrank
