#include "locrank/corpus.hpp"
#include "locrank/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <tuple>

namespace locrank {

using ordered_json = nlohmann::ordered_json;

std::string make_unit_id(std::string_view path, std::string_view qualified_name, int start_line) {
    std::string id;
    id.reserve(path.size() + qualified_name.size() + 16);
    id.append(path).append("::").append(qualified_name).append("::").append(std::to_string(start_line));
    return id;
}

Corpus::Corpus(std::string repo, std::vector<CodeUnit> units)
    : repo_(std::move(repo)), units_(std::move(units)) {
    std::sort(units_.begin(), units_.end(), [](const CodeUnit& a, const CodeUnit& b) {
        return std::tie(a.path, a.start_line, a.id) < std::tie(b.path, b.start_line, b.id);
    });
    index_.reserve(units_.size());
    for (std::size_t i = 0; i < units_.size(); ++i) {
        const auto& unit = units_[i];
        if (!index_.emplace(unit.id, i).second) {
            throw Error(ErrorCode::invalid_argument, "duplicate unit id: " + unit.id);
        }
        ++histogram_[unit.language];
    }
}

const CodeUnit* Corpus::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &units_[it->second];
}

const CodeUnit& slice_unit(const Corpus& corpus, std::string_view id) {
    if (const auto* unit = corpus.find(id)) {
        return *unit;
    }
    throw Error(ErrorCode::not_found, "unknown unit id: " + std::string(id));
}

namespace {

constexpr std::string_view kFormat = "locrank-corpus";
constexpr int kVersion = 1;

ordered_json unit_to_json(const CodeUnit& u) {
    ordered_json j;
    j["id"] = u.id;
    j["repo"] = u.repo;
    j["path"] = u.path;
    j["language"] = language_name(u.language);
    j["qualified_name"] = u.qualified_name;
    j["start_line"] = u.start_line;
    j["end_line"] = u.end_line;
    j["text"] = u.text;
    return j;
}

CodeUnit unit_from_json(const nlohmann::json& j) {
    CodeUnit u;
    u.id = j.at("id").get<std::string>();
    u.repo = j.at("repo").get<std::string>();
    u.path = j.at("path").get<std::string>();
    const auto lang_name = j.at("language").get<std::string>();
    auto lang = parse_language(lang_name);
    if (!lang) {
        throw Error(ErrorCode::parse, "unknown language '" + lang_name + "'");
    }
    u.language = *lang;
    u.qualified_name = j.at("qualified_name").get<std::string>();
    u.start_line = j.at("start_line").get<int>();
    u.end_line = j.at("end_line").get<int>();
    u.text = j.at("text").get<std::string>();
    if (u.start_line < 1 || u.end_line < u.start_line) {
        throw Error(ErrorCode::parse, "invalid line span for " + u.id);
    }
    return u;
}

} // namespace

std::string serialize_corpus(const Corpus& corpus) {
    std::string out;
    ordered_json header;
    header["format"] = kFormat;
    header["version"] = kVersion;
    out += header.dump();
    out.push_back('\n');
    for (const auto& unit : corpus.units()) {
        out += unit_to_json(unit).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        out.push_back('\n');
    }
    return out;
}

Corpus parse_corpus(std::string_view jsonl) {
    std::vector<CodeUnit> units;
    std::string repo;
    bool saw_header = false;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < jsonl.size()) {
        auto end = jsonl.find('\n', pos);
        if (end == std::string_view::npos) {
            end = jsonl.size();
        }
        const auto line = trim(jsonl.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse, "corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!saw_header) {
            if (j.value("format", "") != kFormat || j.value("version", 0) != kVersion) {
                throw Error(ErrorCode::parse, "missing or unsupported corpus header");
            }
            saw_header = true;
            continue;
        }
        try {
            units.push_back(unit_from_json(j));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse, "corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        if (repo.empty()) {
            repo = units.back().repo;
        }
    }
    if (!saw_header) {
        throw Error(ErrorCode::parse, "empty corpus file (header line required)");
    }
    return Corpus(std::move(repo), std::move(units));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    write_file(path, serialize_corpus(corpus));
}

Corpus load_corpus(const std::filesystem::path& path) {
    return parse_corpus(read_file(path));
}

} // namespace locrank
