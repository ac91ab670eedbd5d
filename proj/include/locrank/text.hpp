#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace locrank {

inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t hash = kFnvOffsetBasis;
    for (char c : bytes) {
        hash ^= static_cast<unsigned char>(c);
        hash *= kFnvPrime;
    }
    return hash;
}

// Lowercases ASCII and splits on runs of bytes that are not ASCII letters or
// digits. Bytes >= 0x80 are kept inside tokens so non-Latin words survive.
std::vector<std::string> word_tokens(std::string_view text);

std::string ascii_lower(std::string_view text);
std::string_view trim(std::string_view text) noexcept;
bool iequals(std::string_view a, std::string_view b) noexcept;
bool icontains(std::string_view haystack, std::string_view needle) noexcept;

// Longest prefix of `text` of at most `max_bytes` that does not split a UTF-8
// sequence.
std::string_view utf8_prefix(std::string_view text, std::size_t max_bytes) noexcept;

std::string hex64(std::uint64_t value);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Non-empty lines of a JSONL file.
std::vector<std::string> read_jsonl_lines(const std::filesystem::path& path);

} // namespace locrank
