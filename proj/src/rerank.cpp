#include "locrank/rerank.hpp"
#include "locrank/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <limits>
#include <random>
#include <unordered_set>

namespace locrank {

namespace {

constexpr std::string_view kRerankSystemPrompt =
    "You are CodeRanker, an intelligent code reviewer that can analyze GitHub issues and rank code "
    "functions based on their relevance to containing the faults causing the GitHub issue.";

constexpr std::string_view kCodeFunctionsHeading = "\n\n### Code Functions\n\n";
constexpr std::string_view kResponseFormatHeading = "\n### Response Format\n\n";

constexpr std::string_view kResponseFormat =
    "All the code functions should be included and listed using identifiers, in descending order of "
    "relevance. The output format should be [] > [], e.g., [2] > [1]. Only respond with the ranking "
    "results, do not give any explanation.";

std::string entry_prefix(std::size_t ident) { return "[" + std::to_string(ident) + "]: "; }

} // namespace

std::vector<ChatMessage> RerankPrompt::messages() const {
    return {ChatMessage{"system", system}, ChatMessage{"user", user}};
}

std::string truncate_candidate(std::string_view text) {
    if (text.size() <= kCandidateCharBudget) {
        return std::string(text);
    }
    std::string out(utf8_prefix(text, kCandidateCharBudget));
    out += kTruncationMarker;
    return out;
}

RerankPrompt build_rerank_prompt(const CandidateWindow& window) {
    if (trim(window.query_text).empty()) {
        throw Error(ErrorCode::invalid_argument, "rerank prompt needs a non-empty issue text");
    }
    const auto n = window.candidates.size();
    if (n == 0 || n > kMaxWindowSize) {
        throw Error(ErrorCode::invalid_argument, "rerank window must hold 1..10 candidates, got " +
                                                     std::to_string(n));
    }
    std::string user = "I will provide you with " + std::to_string(n) +
                       " code functions, each indicated by a numerical identifier []. Rank the code "
                       "functions based on their relevance to containing the faults causing the "
                       "following GitHub issue:\n";
    user += window.query_text;
    user += kCodeFunctionsHeading;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = window.candidates[i];
        if (c.ident != static_cast<int>(i + 1)) {
            throw Error(ErrorCode::invalid_argument, "candidate identifiers must be 1..n in order");
        }
        user += entry_prefix(i + 1);
        user += truncate_candidate(c.text);
        user.push_back('\n');
    }
    user += kResponseFormatHeading;
    user += kResponseFormat;
    return RerankPrompt{std::string(kRerankSystemPrompt), std::move(user)};
}

std::vector<std::string> split_rerank_candidates(std::string_view user_prompt) {
    const auto head = user_prompt.find(kCodeFunctionsHeading);
    const auto tail = user_prompt.rfind(kResponseFormatHeading);
    if (head == std::string_view::npos || tail == std::string_view::npos || tail < head) {
        return {};
    }
    auto body = user_prompt.substr(head + kCodeFunctionsHeading.size(),
                                   tail - head - kCodeFunctionsHeading.size());
    std::vector<std::string> out;
    if (!body.starts_with(entry_prefix(1))) {
        return out;
    }
    std::size_t pos = entry_prefix(1).size();
    for (std::size_t ident = 2;; ++ident) {
        const auto marker = "\n" + entry_prefix(ident);
        const auto next = body.find(marker, pos);
        if (next == std::string_view::npos) {
            auto last = body.substr(pos);
            if (last.ends_with('\n')) {
                last.remove_suffix(1);
            }
            out.emplace_back(last);
            break;
        }
        out.emplace_back(body.substr(pos, next - pos));
        pos = next + marker.size();
    }
    return out;
}

RankingPermutation parse_ranking(std::string_view response, int n) {
    if (n < 1) {
        throw Error(ErrorCode::invalid_argument, "parse_ranking needs n >= 1");
    }
    std::vector<int> order;
    std::vector<bool> seen(static_cast<std::size_t>(n) + 1, false);
    for (std::size_t i = 0; i < response.size(); ++i) {
        if (response[i] != '[') {
            continue;
        }
        std::size_t j = i + 1;
        long long value = 0;
        bool overflow = false;
        while (j < response.size() && response[j] >= '0' && response[j] <= '9') {
            value = value * 10 + (response[j] - '0');
            if (value > std::numeric_limits<int>::max()) {
                overflow = true;
                value = std::numeric_limits<int>::max();
            }
            ++j;
        }
        if (j == i + 1 || j >= response.size() || response[j] != ']') {
            continue;
        }
        i = j;
        if (overflow || value < 1 || value > n || seen[static_cast<std::size_t>(value)]) {
            continue;
        }
        seen[static_cast<std::size_t>(value)] = true;
        order.push_back(static_cast<int>(value));
    }
    if (order.empty()) {
        throw Error(ErrorCode::parse, "no valid ranking identifiers in response");
    }
    for (int id = 1; id <= n; ++id) {
        if (!seen[static_cast<std::size_t>(id)]) {
            order.push_back(id);
        }
    }
    return RankingPermutation{std::move(order)};
}

RankedList rerank_sliding(const Query& query, const RankedList& ranked, const Corpus& corpus,
                          ChatBackend& chat, const SlidingWindowOptions& options,
                          Diagnostics* diagnostics) {
    if (options.window < 2 || options.window > kMaxWindowSize || options.stride == 0 ||
        options.stride > options.window) {
        throw Error(ErrorCode::invalid_argument, "invalid sliding window configuration");
    }
    std::vector<std::string> ids = ranked.ids();
    const std::size_t n = ids.size();
    if (n > 1) {
        validate_query(query);
    }
    std::size_t end = n;
    while (n > 1) {
        const std::size_t start = end > options.window ? end - options.window : 0;
        CandidateWindow window{query.text, {}};
        for (std::size_t i = start; i < end; ++i) {
            const auto& unit = slice_unit(corpus, ids[i]);
            window.candidates.push_back(
                WindowCandidate{static_cast<int>(i - start + 1), unit.id, unit.text});
        }
        if (window.candidates.size() > 1) {
            try {
                const auto prompt = build_rerank_prompt(window);
                const auto messages = prompt.messages();
                const auto response = chat.complete(messages);
                const auto perm = parse_ranking(response, static_cast<int>(window.candidates.size()));
                for (std::size_t i = 0; i < perm.order.size(); ++i) {
                    ids[start + i] = window.candidates[static_cast<std::size_t>(perm.order[i] - 1)].unit_id;
                }
            } catch (const std::exception& e) {
                warn(diagnostics, "rerank window [" + std::to_string(start) + ", " + std::to_string(end) +
                                      ") for query '" + query.id + "' kept incoming order: " + e.what());
            }
        }
        if (start == 0) {
            break;
        }
        end -= options.stride;
    }

    RankedList out{ranked.query_id, {}, ranked.k};
    out.items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.items.push_back(ScoredId{ids[i], ranked.items[i].score});
    }
    return out;
}

std::string identity_ranking(std::size_t n) {
    std::string out;
    for (std::size_t i = 1; i <= n; ++i) {
        if (i > 1) {
            out += " > ";
        }
        out += "[" + std::to_string(i) + "]";
    }
    return out;
}

std::string reverse_ranking(std::size_t n) {
    std::string out;
    for (std::size_t i = n; i >= 1; --i) {
        if (i < n) {
            out += " > ";
        }
        out += "[" + std::to_string(i) + "]";
    }
    return out;
}

namespace {

std::string_view last_user_content(std::span<const ChatMessage> messages) {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role == "user") {
            return it->content;
        }
    }
    return {};
}

} // namespace

ScriptedChat::Responder identity_ranker() {
    return [](std::span<const ChatMessage> messages) {
        return identity_ranking(split_rerank_candidates(last_user_content(messages)).size());
    };
}

ScriptedChat::Responder reverse_ranker() {
    return [](std::span<const ChatMessage> messages) {
        return reverse_ranking(split_rerank_candidates(last_user_content(messages)).size());
    };
}

ScriptedChat::Responder keyword_ranker(std::vector<std::string> keywords) {
    return [keywords = std::move(keywords)](std::span<const ChatMessage> messages) {
        const auto texts = split_rerank_candidates(last_user_content(messages));
        std::vector<std::size_t> front;
        std::vector<std::size_t> back;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            const bool hit = std::any_of(keywords.begin(), keywords.end(),
                                         [&](const std::string& k) { return icontains(texts[i], k); });
            (hit ? front : back).push_back(i + 1);
        }
        front.insert(front.end(), back.begin(), back.end());
        std::string out;
        for (std::size_t i = 0; i < front.size(); ++i) {
            out += (i ? " > [" : "[") + std::to_string(front[i]) + "]";
        }
        return out;
    };
}

RerankPrompt RerankTrainInstance::prompt() const {
    return build_rerank_prompt(CandidateWindow{query, candidates});
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) {
        perm[i] = i;
    }
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        // Uniform draw in [0, i) by rejection.
        const std::uint64_t bound = i;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x = 0;
        do {
            x = rng();
        } while (x >= limit);
        std::swap(perm[i - 1], perm[static_cast<std::size_t>(x % bound)]);
    }
    return perm;
}

RerankTrainInstance make_rerank_train_instance(std::string_view query, std::string_view positive_id,
                                               std::span<const CandidateText> candidates,
                                               std::uint64_t seed) {
    if (candidates.empty() || candidates.size() > kMaxWindowSize) {
        throw Error(ErrorCode::invalid_instance, "rerank training instance needs 1..10 candidates");
    }
    std::unordered_set<std::string_view> ids;
    bool has_positive = false;
    for (const auto& c : candidates) {
        if (!ids.insert(c.id).second) {
            throw Error(ErrorCode::invalid_instance, "duplicate candidate id " + c.id);
        }
        has_positive = has_positive || c.id == positive_id;
    }
    if (!has_positive) {
        throw Error(ErrorCode::invalid_instance, "positive '" + std::string(positive_id) +
                                                     "' is not among the candidates");
    }
    RerankTrainInstance instance;
    instance.query = std::string(query);
    const auto perm = seeded_permutation(candidates.size(), seed);
    for (std::size_t slot = 0; slot < perm.size(); ++slot) {
        const auto& c = candidates[perm[slot]];
        const int ident = static_cast<int>(slot + 1);
        instance.candidates.push_back(WindowCandidate{ident, c.id, c.text});
        if (c.id == positive_id) {
            instance.label = ident;
        }
    }
    return instance;
}

std::string rerank_instance_to_json(const RerankTrainInstance& instance) {
    nlohmann::ordered_json j;
    j["query"] = instance.query;
    j["candidates"] = nlohmann::ordered_json::array();
    for (const auto& c : instance.candidates) {
        nlohmann::ordered_json entry;
        entry["ident"] = c.ident;
        entry["id"] = c.unit_id;
        entry["text"] = c.text;
        j["candidates"].push_back(std::move(entry));
    }
    j["label"] = instance.label;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

RerankTrainInstance rerank_instance_from_json(std::string_view line) {
    try {
        const auto j = nlohmann::json::parse(line);
        RerankTrainInstance instance;
        instance.query = j.at("query").get<std::string>();
        for (const auto& c : j.at("candidates")) {
            instance.candidates.push_back(WindowCandidate{c.at("ident").get<int>(), c.at("id").get<std::string>(),
                                                          c.at("text").get<std::string>()});
        }
        instance.label = j.at("label").get<int>();
        return instance;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, std::string("bad rerank instance: ") + e.what());
    }
}

} // namespace locrank
