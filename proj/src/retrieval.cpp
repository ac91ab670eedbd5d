#include "locrank/retrieval.hpp"
#include "locrank/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <thread>

namespace locrank {

std::vector<std::string> RankedList::ids() const {
    std::vector<std::string> out;
    out.reserve(items.size());
    for (const auto& item : items) {
        out.push_back(item.id);
    }
    return out;
}

void validate_query(const Query& query) {
    if (trim(query.text).empty()) {
        throw Error(ErrorCode::invalid_argument, "query '" + query.id + "' has empty text");
    }
}

EmbeddingVector embed_query(const Query& query, EmbeddingBackend& backend, const RetrieveOptions& options) {
    validate_query(query);
    std::string_view text = query.text;
    if (options.max_query_chars > 0) {
        text = utf8_prefix(text, options.max_query_chars);
    }
    const std::vector<std::string> input{options.query_prefix + std::string(text)};
    return std::move(embed(backend, input, options.embed).front());
}

std::vector<ScoredId> score_corpus(const EmbeddingVector& query_vector, const Corpus& corpus,
                                   EmbeddingBackend& backend, EmbeddingCache& cache,
                                   const RetrieveOptions& options) {
    warm_cache(backend, corpus, cache, WarmOptions{options.embed, {}});

    const auto& units = corpus.units();
    std::vector<std::string> keys;
    keys.reserve(units.size());
    for (const auto& unit : units) {
        keys.push_back(content_hash(unit.text));
    }

    std::vector<ScoredId> scored(units.size());
    cache.read([&](const auto& entries) {
        auto score_range = [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                scored[i] = ScoredId{units[i].id, cosine(query_vector, entries.at(keys[i]))};
            }
        };
        const unsigned jobs = std::max(1u, options.jobs);
        if (jobs == 1 || units.size() < 2048) {
            score_range(0, units.size());
            return;
        }
        // Each worker writes a disjoint slice of `scored`.
        std::vector<std::jthread> pool;
        const std::size_t chunk = (units.size() + jobs - 1) / jobs;
        for (std::size_t begin = 0; begin < units.size(); begin += chunk) {
            pool.emplace_back(score_range, begin, std::min(units.size(), begin + chunk));
        }
    });
    std::sort(scored.begin(), scored.end(), ranks_before);
    return scored;
}

RankedList retrieve_topk(const Query& query, const Corpus& corpus, EmbeddingBackend& backend,
                         EmbeddingCache& cache, std::size_t k, const RetrieveOptions& options) {
    if (k == 0) {
        throw Error(ErrorCode::invalid_argument, "k must be positive");
    }
    if (corpus.empty()) {
        throw Error(ErrorCode::empty_corpus, "cannot retrieve from an empty corpus");
    }
    const auto query_vector = embed_query(query, backend, options);
    auto scored = score_corpus(query_vector, corpus, backend, cache, options);
    scored.resize(std::min(k, scored.size()));
    return RankedList{query.id, std::move(scored), k};
}

std::string prediction_to_json(const RankedList& list) {
    nlohmann::ordered_json j;
    j["query_id"] = list.query_id;
    j["ranking"] = nlohmann::ordered_json::array();
    for (const auto& item : list.items) {
        nlohmann::ordered_json entry;
        entry["id"] = item.id;
        entry["score"] = item.score;
        j["ranking"].push_back(std::move(entry));
    }
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

RankedList prediction_from_json(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        RankedList list;
        list.query_id = j.at("query_id").get<std::string>();
        for (const auto& entry : j.at("ranking")) {
            list.items.push_back(ScoredId{entry.at("id").get<std::string>(), entry.value("score", 0.0)});
        }
        list.k = list.items.size();
        return list;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, std::string("bad prediction record: ") + e.what());
    }
}

void save_predictions(const std::vector<RankedList>& lists, const std::filesystem::path& path) {
    std::string out;
    for (const auto& list : lists) {
        out += prediction_to_json(list);
        out.push_back('\n');
    }
    write_file(path, out);
}

std::vector<RankedList> load_predictions(const std::filesystem::path& path) {
    std::vector<RankedList> out;
    for (const auto& line : read_jsonl_lines(path)) {
        out.push_back(prediction_from_json(line));
    }
    return out;
}

} // namespace locrank
