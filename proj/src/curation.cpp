#include "locrank/curation.hpp"
#include "locrank/retrieval.hpp"
#include "locrank/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <set>
#include <unordered_set>

namespace locrank {

namespace chr = std::chrono;

Timestamp parse_timestamp(std::string_view text) {
    const auto t = trim(text);
    int y = 0;
    unsigned mo = 0;
    unsigned d = 0;
    int h = 0;
    int mi = 0;
    int s = 0;
    const std::string buf(t);
    int consumed = 0;
    const bool full = std::sscanf(buf.c_str(), "%d-%u-%uT%d:%d:%d%n", &y, &mo, &d, &h, &mi, &s, &consumed) == 6;
    if (!full) {
        consumed = 0;
        if (std::sscanf(buf.c_str(), "%d-%u-%u%n", &y, &mo, &d, &consumed) != 3) {
            throw Error(ErrorCode::parse, "bad timestamp '" + buf + "'");
        }
    }
    const auto rest = std::string_view(buf).substr(static_cast<std::size_t>(consumed));
    if (!(rest.empty() || rest == "Z" || rest == "+00:00")) {
        throw Error(ErrorCode::parse, "timestamp must be UTC: '" + buf + "'");
    }
    const chr::year_month_day ymd{chr::year{y}, chr::month{mo}, chr::day{d}};
    if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 60) {
        throw Error(ErrorCode::parse, "invalid date '" + buf + "'");
    }
    return chr::sys_days{ymd} + chr::hours{h} + chr::minutes{mi} + chr::seconds{s};
}

std::string format_timestamp(Timestamp t) {
    const auto day = chr::floor<chr::days>(t);
    const chr::year_month_day ymd{day};
    const auto secs = (t - day).count();
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long long>(secs / 3600), static_cast<long long>(secs / 60 % 60),
                  static_cast<long long>(secs % 60));
    return buf;
}

std::vector<RepoMeta> filter_repos(std::span<const RepoMeta> metas, Language target, Timestamp now,
                                   const RepoFilter& filter) {
    std::vector<RepoMeta> kept;
    for (const auto& meta : metas) {
        const auto it = meta.language_fractions.find(target);
        const double fraction = it == meta.language_fractions.end() ? 0.0 : it->second;
        const bool enough_code = fraction >= filter.min_language_fraction;
        const bool popular = meta.stars > filter.stars_above;
        const bool active = now - meta.last_commit <= filter.max_inactivity;
        if (enough_code && popular && active) {
            kept.push_back(meta);
        }
    }
    return kept;
}

RepoMeta repo_meta_from_json(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        RepoMeta meta;
        meta.name = j.at("name").get<std::string>();
        meta.stars = j.at("stars").get<long long>();
        double total = 0.0;
        for (const auto& [name, value] : j.at("language_fractions").items()) {
            const double fraction = value.get<double>();
            if (fraction < 0.0 || fraction > 1.0) {
                throw Error(ErrorCode::parse, meta.name + ": language fraction outside [0,1]");
            }
            total += fraction;
            // Languages outside the supported ten still count towards the total.
            if (auto lang = parse_language(name)) {
                meta.language_fractions[*lang] = fraction;
            }
        }
        if (total > 1.0 + 1e-6) {
            throw Error(ErrorCode::parse, meta.name + ": language fractions sum above 1");
        }
        meta.last_commit = parse_timestamp(j.at("last_commit").get<std::string>());
        return meta;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, std::string("bad repo metadata: ") + e.what());
    }
}

std::vector<RepoMeta> load_repo_metas(const std::filesystem::path& path) {
    std::vector<RepoMeta> out;
    for (const auto& line : read_jsonl_lines(path)) {
        out.push_back(repo_meta_from_json(line));
    }
    return out;
}

PrRecord pr_record_from_json(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        PrRecord r;
        r.repo = j.at("repo").get<std::string>();
        r.pr = j.at("pr").get<long long>();
        r.issue_title = j.at("issue_title").get<std::string>();
        r.issue_body = j.value("issue_body", std::string());
        r.base_commit = j.at("base_commit").get<std::string>();
        r.changed_files = j.value("changed_files", std::vector<std::string>{});
        r.diff = j.at("diff").get<std::string>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, std::string("bad PR record: ") + e.what());
    }
}

std::vector<PrRecord> load_pr_records(const std::filesystem::path& path) {
    std::vector<PrRecord> out;
    for (const auto& line : read_jsonl_lines(path)) {
        out.push_back(pr_record_from_json(line));
    }
    return out;
}

namespace {

std::string strip_diff_prefix(std::string_view path) {
    auto p = trim(path);
    if (const auto tab = p.find('\t'); tab != std::string_view::npos) {
        p = p.substr(0, tab);
    }
    if (p.starts_with("a/") || p.starts_with("b/")) {
        p.remove_prefix(2);
    }
    return std::string(p);
}

} // namespace

std::vector<ChangeBlock> parse_unified_diff(std::string_view diff) {
    std::vector<ChangeBlock> blocks;
    std::string old_path;
    int old_line = 0;
    int old_left = 0;
    int new_left = 0;
    std::optional<ChangeBlock> open;

    const auto close_block = [&] {
        if (open) {
            if (!old_path.empty()) {
                blocks.push_back(*open);
            }
            open.reset();
        }
    };

    std::size_t pos = 0;
    while (pos < diff.size()) {
        auto end = diff.find('\n', pos);
        if (end == std::string_view::npos) {
            end = diff.size();
        }
        auto line = diff.substr(pos, end - pos);
        pos = end + 1;
        if (line.ends_with('\r')) {
            line.remove_suffix(1);
        }

        const bool in_hunk = old_left > 0 || new_left > 0;
        if (in_hunk && !line.empty() && (line[0] == ' ' || line[0] == '-' || line[0] == '+')) {
            if (line[0] == ' ') {
                close_block();
                ++old_line;
                --old_left;
                --new_left;
            } else if (line[0] == '-') {
                if (!open) {
                    open = ChangeBlock{old_path, old_line, old_line, false};
                } else if (open->insertion) {
                    *open = ChangeBlock{old_path, old_line, old_line, false};
                }
                open->old_end = old_line;
                ++old_line;
                --old_left;
            } else {
                if (!open) {
                    open = ChangeBlock{old_path, old_line - 1, old_line - 1, true};
                }
                --new_left;
            }
            continue;
        }
        if (in_hunk && line.empty()) {
            // Some tools drop the leading space on empty context lines.
            close_block();
            ++old_line;
            --old_left;
            --new_left;
            continue;
        }
        if (line.starts_with("\\")) {
            continue;  // "\ No newline at end of file"
        }
        close_block();
        old_left = 0;
        new_left = 0;
        if (line.starts_with("diff --git ")) {
            old_path.clear();
        } else if (line.starts_with("--- ")) {
            const auto p = line.substr(4);
            old_path = trim(p).starts_with("/dev/null") ? std::string() : strip_diff_prefix(p);
        } else if (line.starts_with("@@")) {
            int old_start = 0;
            int old_count = 1;
            int new_start = 0;
            int new_count = 1;
            const std::string header(line);
            if (std::sscanf(header.c_str(), "@@ -%d,%d +%d,%d", &old_start, &old_count, &new_start, &new_count) == 4 ||
                (old_count = 1, new_count = 1,
                 std::sscanf(header.c_str(), "@@ -%d +%d,%d", &old_start, &new_start, &new_count) == 3) ||
                (old_count = 1, new_count = 1,
                 std::sscanf(header.c_str(), "@@ -%d,%d +%d", &old_start, &old_count, &new_start) == 3) ||
                (old_count = 1, new_count = 1, std::sscanf(header.c_str(), "@@ -%d +%d", &old_start, &new_start) == 2)) {
                // A zero-length old range names the line *before* the hunk.
                old_line = old_count == 0 ? old_start + 1 : old_start;
                old_left = old_count;
                new_left = new_count;
            } else {
                throw Error(ErrorCode::parse, "bad hunk header: " + header);
            }
        }
    }
    close_block();
    return blocks;
}

std::vector<std::string> diff_paths(std::string_view diff) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < diff.size()) {
        auto end = diff.find('\n', pos);
        if (end == std::string_view::npos) {
            end = diff.size();
        }
        const auto line = diff.substr(pos, end - pos);
        pos = end + 1;
        if (!line.starts_with("--- ") && !line.starts_with("+++ ")) {
            continue;
        }
        const auto p = line.substr(4);
        if (trim(p).starts_with("/dev/null")) {
            continue;
        }
        auto path = strip_diff_prefix(p);
        if (!path.empty() && std::find(out.begin(), out.end(), path) == out.end()) {
            out.push_back(std::move(path));
        }
    }
    return out;
}

bool block_touches(const ChangeBlock& block, const CodeUnit& unit) noexcept {
    if (block.insertion) {
        // New lines between old_begin and old_begin + 1, both inside the unit.
        return unit.start_line <= block.old_begin && block.old_begin < unit.end_line;
    }
    return block.old_begin <= unit.end_line && unit.start_line <= block.old_end;
}

bool is_test_path(std::string_view path) {
    std::size_t pos = 0;
    while (pos <= path.size()) {
        auto end = path.find_first_of("/\\", pos);
        if (end == std::string_view::npos) {
            end = path.size();
        }
        const auto segment = path.substr(pos, end - pos);
        if (icontains(segment, "test") || icontains(segment, "spec")) {
            return true;
        }
        pos = end + 1;
    }
    return false;
}

std::vector<IssueInstance> build_issue_instances(std::span<const PrRecord> records, const SnapshotLookup& snapshots,
                                                 Diagnostics* diagnostics) {
    std::vector<IssueInstance> out;
    for (const auto& record : records) {
        const std::string label = record.repo + "#" + std::to_string(record.pr);
        std::vector<ChangeBlock> blocks;
        try {
            blocks = parse_unified_diff(record.diff);
        } catch (const Error& e) {
            warn(diagnostics, label + ": " + e.what() + ", record dropped");
            continue;
        }
        std::set<std::string> touched(record.changed_files.begin(), record.changed_files.end());
        for (auto& p : diff_paths(record.diff)) {
            touched.insert(std::move(p));
        }
        if (std::none_of(touched.begin(), touched.end(), [](const std::string& p) { return is_test_path(p); })) {
            continue;  // no test modification
        }
        const Corpus* corpus = snapshots ? snapshots(record.repo, record.base_commit) : nullptr;
        if (corpus == nullptr) {
            warn(diagnostics, label + ": no snapshot corpus for " + record.base_commit + ", record dropped");
            continue;
        }
        IssueInstance instance;
        instance.query = record.issue_title + "\n\n" + record.issue_body;
        instance.repo = record.repo;
        instance.pr = record.pr;
        instance.snapshot_ref = record.base_commit;
        for (const auto& unit : corpus->units()) {
            const bool hit = std::any_of(blocks.begin(), blocks.end(), [&](const ChangeBlock& b) {
                return b.path == unit.path && !is_test_path(b.path) && block_touches(b, unit);
            });
            if (hit) {
                instance.positive_ids.push_back(unit.id);
            }
        }
        if (instance.positive_ids.empty()) {
            warn(diagnostics, label + ": no function overlaps a non-test hunk, record dropped");
            continue;
        }
        out.push_back(std::move(instance));
    }
    std::stable_sort(out.begin(), out.end(), [](const IssueInstance& a, const IssueInstance& b) {
        return std::tie(a.repo, a.pr) < std::tie(b.repo, b.pr);
    });
    return out;
}

std::string contrastive_to_json(const ContrastiveInstance& instance) {
    nlohmann::ordered_json j;
    j["query"] = instance.query;
    j["positive_id"] = instance.positive_id;
    j["negative_ids"] = instance.negative_ids;
    j["repo"] = instance.repo;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

ContrastiveInstance contrastive_from_json(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        return ContrastiveInstance{j.at("query").get<std::string>(), j.at("positive_id").get<std::string>(),
                                   j.at("negative_ids").get<std::vector<std::string>>(),
                                   j.at("repo").get<std::string>()};
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, std::string("bad contrastive instance: ") + e.what());
    }
}

namespace {

std::vector<ScoredId> full_ranking(std::string_view query_text, const Corpus& corpus, EmbeddingBackend& backend,
                                   EmbeddingCache& cache) {
    const auto qv = embed_query(Query{"", std::string(query_text)}, backend);
    return score_corpus(qv, corpus, backend, cache);
}

std::vector<std::string> negatives_from_ranking(const std::vector<ScoredId>& ranking,
                                                std::span<const std::string> positive_ids, std::size_t count) {
    const std::unordered_set<std::string> positives(positive_ids.begin(), positive_ids.end());
    std::vector<std::string> out;
    for (const auto& item : ranking) {
        if (out.size() >= count) {
            break;
        }
        if (!positives.contains(item.id)) {
            out.push_back(item.id);
        }
    }
    return out;
}

} // namespace

std::map<std::string, std::size_t> rank_positions(std::string_view query_text, const Corpus& corpus,
                                                  EmbeddingBackend& backend, EmbeddingCache& cache) {
    std::map<std::string, std::size_t> ranks;
    const auto ranking = full_ranking(query_text, corpus, backend, cache);
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        ranks.emplace(ranking[i].id, i + 1);
    }
    return ranks;
}

std::vector<std::string> mine_hard_negatives(std::string_view query_text, const Corpus& corpus,
                                             std::span<const std::string> positive_ids, std::size_t count,
                                             EmbeddingBackend& backend, EmbeddingCache& cache,
                                             Diagnostics* diagnostics) {
    if (corpus.empty() || count == 0) {
        return {};
    }
    auto negatives = negatives_from_ranking(full_ranking(query_text, corpus, backend, cache), positive_ids, count);
    if (negatives.size() < count) {
        warn(diagnostics, "only " + std::to_string(negatives.size()) + " of " + std::to_string(count) +
                              " hard negatives available");
    }
    return negatives;
}

ConsistencyResult consistency_filter(const IssueInstance& instance, const Corpus& corpus,
                                     EmbeddingBackend& backend, EmbeddingCache& cache,
                                     const CurationOptions& options, Diagnostics* diagnostics) {
    ConsistencyResult result;
    if (corpus.empty()) {
        return result;
    }
    const auto ranking = full_ranking(instance.query, corpus, backend, cache);
    std::unordered_map<std::string, std::size_t> rank_of;
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        rank_of.emplace(ranking[i].id, i + 1);
    }
    std::vector<std::string> qualifying;
    for (const auto& id : instance.positive_ids) {
        const auto it = rank_of.find(id);
        if (it == rank_of.end()) {
            continue;
        }
        result.positive_ranks.emplace(id, it->second);
        if (it->second <= options.top_n) {
            qualifying.push_back(id);
        }
    }
    result.kept = !qualifying.empty();
    if (!result.kept) {
        return result;
    }
    auto negatives = negatives_from_ranking(ranking, instance.positive_ids, options.negatives);
    if (negatives.size() < options.negatives) {
        warn(diagnostics, instance.repo + "#" + std::to_string(instance.pr) + ": only " +
                              std::to_string(negatives.size()) + " hard negatives available");
    }
    for (const auto& positive : qualifying) {
        result.instances.push_back(ContrastiveInstance{instance.query, positive, negatives, instance.repo});
    }
    return result;
}

CurationOutput curate(std::span<const PrRecord> records, const SnapshotLookup& snapshots,
                      EmbeddingBackend& backend, EmbeddingCache& cache, const CurationOptions& options,
                      Diagnostics* diagnostics) {
    CurationOutput out;
    out.issues = build_issue_instances(records, snapshots, diagnostics);

    struct Tally {
        std::set<std::string> repos;
        std::set<std::pair<std::string, long long>> prs;
        std::size_t instances = 0;
    };
    std::map<Language, Tally> tallies;

    for (const auto& issue : out.issues) {
        const Corpus* corpus = snapshots(issue.repo, issue.snapshot_ref);
        auto kept = consistency_filter(issue, *corpus, backend, cache, options, diagnostics);
        if (!kept.kept) {
            continue;
        }
        for (auto& instance : kept.instances) {
            const auto& positive = slice_unit(*corpus, instance.positive_id);
            auto& tally = tallies[positive.language];
            tally.repos.insert(issue.repo);
            tally.prs.emplace(issue.repo, issue.pr);
            ++tally.instances;

            std::vector<CandidateText> candidates{{positive.id, positive.text}};
            for (const auto& neg : instance.negative_ids) {
                if (candidates.size() >= kMaxWindowSize) {
                    break;
                }
                candidates.push_back({neg, slice_unit(*corpus, neg).text});
            }
            const auto seed = options.seed ^ fnv1a64(issue.repo + "#" + std::to_string(issue.pr) + "#" + positive.id);
            out.rerank.push_back(make_rerank_train_instance(issue.query, positive.id, candidates, seed));
            out.contrastive.push_back(std::move(instance));
        }
    }
    for (const auto& [lang, tally] : tallies) {
        out.table.push_back(LanguageStats{lang, tally.repos.size(), tally.prs.size(), tally.instances});
    }
    return out;
}

std::string render_language_table(std::span<const LanguageStats> rows) {
    std::string out;
    char line[128];
    std::snprintf(line, sizeof(line), "%-12s %8s %8s %11s\n", "language", "#repos", "#PRs", "#instances");
    out += line;
    std::size_t repos = 0;
    std::size_t prs = 0;
    std::size_t instances = 0;
    for (const auto& row : rows) {
        std::snprintf(line, sizeof(line), "%-12s %8zu %8zu %11zu\n", std::string(language_name(row.language)).c_str(),
                      row.repos, row.prs, row.instances);
        out += line;
        repos += row.repos;
        prs += row.prs;
        instances += row.instances;
    }
    std::snprintf(line, sizeof(line), "%-12s %8zu %8zu %11zu\n", "total", repos, prs, instances);
    out += line;
    return out;
}

} // namespace locrank
