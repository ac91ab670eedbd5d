#pragma once

#include "locrank/error.hpp"
#include "locrank/language.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace locrank {

/// One extracted function or method: the unit of retrieval.
struct CodeUnit {
    std::string id;  ///< "{path}::{qualified_name}::{start_line}"
    std::string repo;
    std::string path;  ///< relative to the repository root, '/' separated
    Language language = Language::python;
    std::string qualified_name;
    int start_line = 0;  ///< 1-based, inclusive
    int end_line = 0;    ///< 1-based, inclusive
    std::string text;    ///< lines [start_line, end_line] of the file, without the final newline

    bool operator==(const CodeUnit&) const = default;
};

std::string make_unit_id(std::string_view path, std::string_view qualified_name, int start_line);

/// Immutable, (path, start_line)-ordered set of units from one repository snapshot.
class Corpus {
public:
    Corpus() = default;

    // Sorts units by (path, start_line, id) and rejects duplicate ids.
    Corpus(std::string repo, std::vector<CodeUnit> units);

    const std::string& repo() const noexcept { return repo_; }
    const std::vector<CodeUnit>& units() const noexcept { return units_; }
    const std::map<Language, std::size_t>& language_histogram() const noexcept { return histogram_; }
    std::size_t size() const noexcept { return units_.size(); }
    bool empty() const noexcept { return units_.empty(); }

    // nullptr when absent.
    const CodeUnit* find(std::string_view id) const;

private:
    std::string repo_;
    std::vector<CodeUnit> units_;
    std::map<Language, std::size_t> histogram_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct ExtractOptions {
    std::uintmax_t max_file_bytes = 1024 * 1024;
    std::size_t max_file_lines = 20000;
    unsigned jobs = 1;
    std::string repo;  ///< defaults to the directory name of repo_root
};

/// Walks `repo_root` and extracts every function/method definition in files of
/// the requested languages. Unreadable, oversized or unparseable files are
/// skipped and reported through `diagnostics`; extraction never aborts on them.
Corpus extract_functions(const std::filesystem::path& repo_root, const LanguageSet& languages,
                         const ExtractOptions& options = {}, Diagnostics* diagnostics = nullptr);

/// Extracts units from a single in-memory source file.
std::vector<CodeUnit> extract_file_units(std::string_view repo, std::string_view rel_path,
                                         Language language, std::string_view source,
                                         Diagnostics* diagnostics = nullptr);

/// Throws Error{not_found} when `id` is not in the corpus.
const CodeUnit& slice_unit(const Corpus& corpus, std::string_view id);

// JSONL: header line {"format":"locrank-corpus","version":1}, then one unit per line.
std::string serialize_corpus(const Corpus& corpus);
Corpus parse_corpus(std::string_view jsonl);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

} // namespace locrank
