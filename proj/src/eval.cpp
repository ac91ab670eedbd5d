#include "locrank/eval.hpp"
#include "locrank/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace locrank {

std::string bench_instance_to_json(const BenchInstance& instance) {
    nlohmann::ordered_json j;
    j["query_id"] = instance.query.id;
    j["query"] = instance.query.text;
    j["gold_ids"] = instance.gold_ids;
    j["repo"] = instance.repo;
    j["snapshot_ref"] = instance.snapshot_ref;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

BenchInstance bench_instance_from_json(std::string_view line) {
    BenchInstance out;
    try {
        const auto j = nlohmann::json::parse(line);
        out.query.id = j.at("query_id").get<std::string>();
        out.query.text = j.at("query").get<std::string>();
        out.gold_ids = j.at("gold_ids").get<std::vector<std::string>>();
        out.repo = j.value("repo", std::string());
        out.snapshot_ref = j.value("snapshot_ref", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse, std::string("bad benchmark instance: ") + e.what());
    }
    if (out.gold_ids.empty()) {
        throw Error(ErrorCode::invalid_instance, out.query.id + ": empty gold set");
    }
    return out;
}

std::vector<BenchInstance> load_bench_instances(const std::filesystem::path& path) {
    std::vector<BenchInstance> out;
    for (const auto& line : read_jsonl_lines(path)) {
        out.push_back(bench_instance_from_json(line));
    }
    return out;
}

void save_bench_instances(std::span<const BenchInstance> instances, const std::filesystem::path& path) {
    std::string text;
    for (const auto& instance : instances) {
        text += bench_instance_to_json(instance);
        text += '\n';
    }
    write_file(path, text);
}

bool acc_at_k(const RankedList& prediction, std::span<const std::string> gold, std::size_t k) {
    if (gold.empty()) {
        throw Error(ErrorCode::invalid_instance, "empty gold set");
    }
    if (k == 0) {
        throw Error(ErrorCode::invalid_argument, "k must be at least 1");
    }
    const auto limit = std::min(k, prediction.items.size());
    std::unordered_set<std::string_view> top;
    for (std::size_t i = 0; i < limit; ++i) {
        top.insert(prediction.items[i].id);
    }
    return std::all_of(gold.begin(), gold.end(), [&](const std::string& id) { return top.contains(id); });
}

namespace {

constexpr std::size_t kDefaultKs[] = {5, 10};

std::unordered_map<std::string, const RankedList*> index_predictions(std::span<const RankedList> predictions) {
    std::unordered_map<std::string, const RankedList*> out;
    for (const auto& p : predictions) {
        if (!out.emplace(p.query_id, &p).second) {
            throw Error(ErrorCode::input, "duplicate prediction for query " + p.query_id);
        }
    }
    return out;
}

void check_unique_instances(std::span<const BenchInstance> instances) {
    std::unordered_set<std::string> seen;
    for (const auto& instance : instances) {
        if (!seen.insert(instance.query.id).second) {
            throw Error(ErrorCode::input, "duplicate instance query id " + instance.query.id);
        }
    }
}

// hits[i] for instance i at cutoff k; a missing prediction is a miss.
std::vector<bool> outcomes(std::span<const BenchInstance> instances,
                           const std::unordered_map<std::string, const RankedList*>& by_id, std::size_t k) {
    std::vector<bool> hits;
    hits.reserve(instances.size());
    for (const auto& instance : instances) {
        const auto it = by_id.find(instance.query.id);
        hits.push_back(it != by_id.end() && acc_at_k(*it->second, instance.gold_ids, k));
    }
    return hits;
}

Stratum make_stratum(std::string label, const std::vector<bool>& hits, std::span<const std::size_t> members,
                     std::size_t k) {
    Stratum s{std::move(label), members.size(), {}};
    std::size_t ok = 0;
    for (auto i : members) {
        ok += hits[i] ? 1 : 0;
    }
    s.acc_at[k] = members.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(members.size());
    return s;
}

} // namespace

EvalReport evaluate(std::span<const RankedList> predictions, std::span<const BenchInstance> instances,
                    std::span<const std::size_t> ks, Diagnostics* diagnostics) {
    check_unique_instances(instances);
    const auto by_id = index_predictions(predictions);
    for (const auto& instance : instances) {
        if (!by_id.contains(instance.query.id)) {
            warn(diagnostics, "no prediction for " + instance.query.id + ", counted as a miss");
        }
    }
    EvalReport report;
    report.n = instances.size();
    for (auto k : ks) {
        const auto hits = outcomes(instances, by_id, k);
        const auto ok = static_cast<double>(std::count(hits.begin(), hits.end(), true));
        report.acc_at[k] = instances.empty() ? 0.0 : ok / static_cast<double>(instances.size());
    }
    return report;
}

EvalReport evaluate(std::span<const RankedList> predictions, std::span<const BenchInstance> instances,
                    Diagnostics* diagnostics) {
    return evaluate(predictions, instances, kDefaultKs, diagnostics);
}

double rouge1_f1(std::string_view a, std::string_view b, RougeVariant variant) {
    const auto ta = word_tokens(a);
    const auto tb = word_tokens(b);
    if (variant == RougeVariant::set) {
        const std::set<std::string> sa(ta.begin(), ta.end());
        const std::set<std::string> sb(tb.begin(), tb.end());
        if (sa.empty() && sb.empty()) {
            return 1.0;
        }
        std::size_t common = 0;
        for (const auto& t : sa) {
            common += sb.contains(t) ? 1 : 0;
        }
        return 2.0 * static_cast<double>(common) / static_cast<double>(sa.size() + sb.size());
    }
    if (ta.empty() && tb.empty()) {
        return 1.0;
    }
    std::map<std::string, std::size_t> ca;
    std::map<std::string, std::size_t> cb;
    for (const auto& t : ta) {
        ++ca[t];
    }
    for (const auto& t : tb) {
        ++cb[t];
    }
    std::size_t common = 0;
    for (const auto& [t, n] : ca) {
        if (const auto it = cb.find(t); it != cb.end()) {
            common += std::min(n, it->second);
        }
    }
    return 2.0 * static_cast<double>(common) / static_cast<double>(ta.size() + tb.size());
}

std::vector<OverlapScore> overlap_scores(std::span<const BenchInstance> instances, const Corpus& corpus,
                                         EmbeddingBackend& backend, EmbeddingCache& cache,
                                         const OverlapOptions& options, Diagnostics* diagnostics) {
    std::vector<OverlapScore> out;
    out.reserve(instances.size());
    for (const auto& instance : instances) {
        std::vector<std::string> texts;
        for (const auto& id : instance.gold_ids) {
            if (const auto* unit = corpus.find(id)) {
                texts.push_back(unit->text);
            } else {
                warn(diagnostics, instance.query.id + ": gold id " + id + " not in corpus");
            }
        }
        OverlapScore score;
        if (!texts.empty()) {
            const auto qv = embed_query(instance.query, backend);
            const auto gv = embed_cached(backend, cache, texts);
            double lex_acc = options.aggregate == OverlapAggregate::max ? -1.0 : 0.0;
            double sem_acc = options.aggregate == OverlapAggregate::max ? -2.0 : 0.0;
            for (std::size_t i = 0; i < texts.size(); ++i) {
                const double lex = rouge1_f1(instance.query.text, texts[i], options.rouge);
                const double sem = cosine(qv, gv[i]);
                if (options.aggregate == OverlapAggregate::max) {
                    lex_acc = std::max(lex_acc, lex);
                    sem_acc = std::max(sem_acc, sem);
                } else {
                    lex_acc += lex;
                    sem_acc += sem;
                }
            }
            if (options.aggregate == OverlapAggregate::mean) {
                lex_acc /= static_cast<double>(texts.size());
                sem_acc /= static_cast<double>(texts.size());
            }
            score = {lex_acc, sem_acc};
        }
        out.push_back(score);
    }
    return out;
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) {
        throw Error(ErrorCode::invalid_argument, "quantile of an empty set");
    }
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<Stratum> quartile_strata(std::span<const double> values, const std::vector<bool>& hits, std::size_t k) {
    if (values.size() != hits.size()) {
        throw Error(ErrorCode::invalid_argument, "values and outcomes differ in length");
    }
    if (values.empty()) {
        return {};
    }
    const std::vector<double> all(values.begin(), values.end());
    const double cuts[3] = {quantile(all, 0.25), quantile(all, 0.5), quantile(all, 0.75)};
    std::vector<std::size_t> members[4];
    for (std::size_t i = 0; i < values.size(); ++i) {
        // Number of cut points strictly below the value; ties fall into the lower bucket.
        const auto bucket = std::lower_bound(std::begin(cuts), std::end(cuts), values[i]) - std::begin(cuts);
        members[bucket].push_back(i);
    }
    std::vector<Stratum> out;
    for (std::size_t b = 0; b < 4; ++b) {
        if (!members[b].empty()) {
            out.push_back(make_stratum("Q" + std::to_string(b + 1), hits, members[b], k));
        }
    }
    return out;
}

OverlapStrata stratify_by_overlap(std::span<const BenchInstance> instances, std::span<const RankedList> predictions,
                                  const Corpus& corpus, EmbeddingBackend& backend, EmbeddingCache& cache,
                                  const OverlapOptions& options, Diagnostics* diagnostics) {
    check_unique_instances(instances);
    const auto by_id = index_predictions(predictions);
    const auto hits = outcomes(instances, by_id, options.k);
    const auto scores = overlap_scores(instances, corpus, backend, cache, options, diagnostics);
    std::vector<double> lexical;
    std::vector<double> semantic;
    for (const auto& s : scores) {
        lexical.push_back(s.lexical);
        semantic.push_back(s.semantic);
    }
    return {quartile_strata(lexical, hits, options.k), quartile_strata(semantic, hits, options.k)};
}

std::vector<Stratum> stratify_by_gold_count(std::span<const BenchInstance> instances,
                                            std::span<const RankedList> predictions, std::size_t k) {
    check_unique_instances(instances);
    const auto by_id = index_predictions(predictions);
    const auto hits = outcomes(instances, by_id, k);
    std::vector<std::size_t> members[3];
    for (std::size_t i = 0; i < instances.size(); ++i) {
        members[std::min<std::size_t>(instances[i].gold_ids.size(), 3) - 1].push_back(i);
    }
    static const char* const labels[3] = {"1", "2", ">=3"};
    std::vector<Stratum> out;
    for (std::size_t b = 0; b < 3; ++b) {
        if (!members[b].empty()) {
            out.push_back(make_stratum(labels[b], hits, members[b], k));
        }
    }
    return out;
}

namespace {

nlohmann::ordered_json acc_json(const AccMap& acc) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : acc) {
        j[std::to_string(k)] = v;
    }
    return j;
}

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return buf;
}

} // namespace

std::string report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["n"] = report.n;
    j["acc_at"] = acc_json(report.acc_at);
    nlohmann::ordered_json strata = nlohmann::ordered_json::object();
    for (const auto& [name, buckets] : report.strata) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& s : buckets) {
            nlohmann::ordered_json b;
            b["label"] = s.label;
            b["n"] = s.n;
            b["acc_at"] = acc_json(s.acc_at);
            arr.push_back(std::move(b));
        }
        strata[name] = std::move(arr);
    }
    j["strata"] = std::move(strata);
    return j.dump(2) + "\n";
}

std::string render_report_table(const EvalReport& report, std::string_view system_name) {
    std::string header = "| System |";
    std::string rule = "|---|";
    std::string row = "| " + std::string(system_name) + " |";
    for (const auto& [k, v] : report.acc_at) {
        header += " Acc@" + std::to_string(k) + " |";
        rule += "---:|";
        row += " " + percent(v) + " |";
    }
    std::string out = header + "\n" + rule + "\n" + row + "\n";
    out += "\nn = " + std::to_string(report.n) + "\n";
    for (const auto& [name, buckets] : report.strata) {
        out += "\n" + name + "\n";
        for (const auto& s : buckets) {
            out += "  " + s.label + " (n=" + std::to_string(s.n) + ")";
            for (const auto& [k, v] : s.acc_at) {
                out += "  Acc@" + std::to_string(k) + " " + percent(v);
            }
            out += "\n";
        }
    }
    return out;
}

std::string render_strata_csv(const EvalReport& report) {
    std::set<std::size_t> ks;
    for (const auto& [name, buckets] : report.strata) {
        for (const auto& s : buckets) {
            for (const auto& [k, v] : s.acc_at) {
                ks.insert(k);
            }
        }
    }
    std::string out = "stratification,bucket,n";
    for (auto k : ks) {
        out += ",acc@" + std::to_string(k);
    }
    out += "\n";
    char buf[64];
    for (const auto& [name, buckets] : report.strata) {
        for (const auto& s : buckets) {
            out += name + "," + s.label + "," + std::to_string(s.n);
            for (auto k : ks) {
                const auto it = s.acc_at.find(k);
                if (it == s.acc_at.end()) {
                    out += ",";
                } else {
                    std::snprintf(buf, sizeof(buf), ",%.6f", it->second);
                    out += buf;
                }
            }
            out += "\n";
        }
    }
    return out;
}

} // namespace locrank
