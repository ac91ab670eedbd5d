#pragma once

#include <array>
#include <optional>
#include <set>
#include <string_view>

namespace locrank {

enum class Language {
    python,
    javascript,
    typescript,
    java,
    ruby,
    rust,
    go,
    php,
    c,
    cpp,
};

inline constexpr std::array<Language, 10> kAllLanguages = {
    Language::python, Language::javascript, Language::typescript, Language::java, Language::ruby,
    Language::rust,   Language::go,         Language::php,        Language::c,    Language::cpp,
};

using LanguageSet = std::set<Language>;

std::string_view language_name(Language lang) noexcept;

// Accepts canonical names plus common aliases ("py", "js", "ts", "c++", ...).
std::optional<Language> parse_language(std::string_view name) noexcept;

// Maps a file extension (with leading dot, case-sensitive) to its language.
std::optional<Language> language_for_extension(std::string_view ext) noexcept;

LanguageSet all_languages();

} // namespace locrank
