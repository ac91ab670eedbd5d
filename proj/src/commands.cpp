#include "locrank/commands.hpp"
#include "locrank/agent.hpp"
#include "locrank/rerank.hpp"
#include "locrank/text.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <memory>

namespace locrank {

namespace {

RankedList head(RankedList list, std::size_t k) {
    if (list.items.size() > k) {
        list.items.resize(k);
    }
    list.k = k;
    return list;
}

std::string file_safe(std::string_view id) {
    std::string out;
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out.empty() ? "_" : out;
}

AgentConfig localize_agent_config(const RunConfig& config) {
    auto agent = config.agent;
    agent.final_k = config.k;
    return agent;
}

} // namespace

Corpus cmd_index(const IndexArgs& args, const RunConfig& config, Diagnostics* diagnostics) {
    if (!fs::is_directory(args.repo_root)) {
        throw Error(ErrorCode::not_found, "repository root not found: " + args.repo_root.string());
    }
    ExtractOptions options;
    options.jobs = config.jobs;
    options.repo = args.repo;
    auto corpus = extract_functions(args.repo_root, args.languages, options, diagnostics);
    save_corpus(corpus, args.out);
    return corpus;
}

Query load_issue_file(const fs::path& path, std::string id) {
    Query q{id.empty() ? path.stem().string() : std::move(id), read_file(path)};
    validate_query(q);
    return q;
}

std::vector<Query> load_issues(const fs::path& path) {
    std::vector<Query> out;
    for (const auto& line : read_jsonl_lines(path)) {
        try {
            const auto j = nlohmann::json::parse(line);
            out.push_back(Query{j.at("query_id").get<std::string>(), j.at("query").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::parse, "bad issue record: " + std::string(e.what()));
        }
        validate_query(out.back());
    }
    return out;
}

std::vector<RankedList> cmd_localize(const LocalizeArgs& args, const RunConfig& config, Diagnostics* diagnostics) {
    const auto corpus = load_corpus(args.corpus);
    auto backends = make_backends(config, diagnostics);
    auto ab = backends.agent_backends();
    const auto agent_config = localize_agent_config(config);

    std::vector<RankedList> out;
    for (const auto& issue : args.issues) {
        if (config.reformulate) {
            out.push_back(reformulate_baseline(issue, corpus, agent_config, ab, *backends.reformulate_chat,
                                               config.reformulations));
        } else if (config.rerank) {
            out.push_back(single_pass(issue, corpus, agent_config, ab));
        } else {
            out.push_back(retrieve_topk(issue, corpus, *backends.embedder, *backends.cache, config.k,
                                        config.agent.retrieve));
        }
        out.back() = head(std::move(out.back()), config.k);
    }
    save_predictions(out, args.out);
    backends.persist(config);
    return out;
}

std::vector<AgentResult> cmd_agent(const AgentArgs& args, const RunConfig& config, Diagnostics* diagnostics) {
    const auto corpus = load_corpus(args.corpus);
    auto backends = make_backends(config, diagnostics);
    auto ab = backends.agent_backends();

    std::vector<AgentResult> results;
    std::vector<RankedList> predictions;
    for (const auto& issue : args.issues) {
        results.push_back(run_agent(issue, corpus, config.agent, ab));
        predictions.push_back(results.back().ranking);
    }
    save_predictions(predictions, args.out);
    if (args.transcript) {
        if (args.issues.size() == 1) {
            save_transcript(results.front().state, *args.transcript);
        } else {
            for (std::size_t i = 0; i < results.size(); ++i) {
                save_transcript(results[i].state, *args.transcript / (file_safe(args.issues[i].id) + ".jsonl"));
            }
        }
    }
    backends.persist(config);
    return results;
}

CurationOutput cmd_curate(const CurateArgs& args, const RunConfig& config, Diagnostics* diagnostics) {
    auto records = load_pr_records(args.pr_records);
    if (args.repo_meta) {
        if (!args.language) {
            throw Error(ErrorCode::usage, "--repo-meta needs --language");
        }
        const auto metas = load_repo_metas(*args.repo_meta);
        const auto now = args.now ? *args.now
                                  : std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
        std::set<std::string> kept;
        for (const auto& meta : filter_repos(metas, *args.language, now)) {
            kept.insert(meta.name);
        }
        std::erase_if(records, [&](const PrRecord& r) { return !kept.contains(r.repo); });
    }

    std::map<std::pair<std::string, std::string>, std::unique_ptr<Corpus>> snapshots;
    const SnapshotLookup lookup = [&](const std::string& repo, const std::string& base) -> const Corpus* {
        const auto key = std::make_pair(repo, base);
        if (const auto it = snapshots.find(key); it != snapshots.end()) {
            return it->second.get();
        }
        std::unique_ptr<Corpus> corpus;
        const auto dir = args.repos_dir / repo / base;
        auto saved = dir;
        saved += ".jsonl";
        if (fs::is_regular_file(saved)) {
            corpus = std::make_unique<Corpus>(load_corpus(saved));
        } else if (fs::is_directory(dir)) {
            ExtractOptions options;
            options.jobs = config.jobs;
            options.repo = repo;
            corpus = std::make_unique<Corpus>(extract_functions(dir, all_languages(), options, diagnostics));
        }
        return snapshots.emplace(key, std::move(corpus)).first->second.get();
    };

    auto backends = make_backends(config, diagnostics);
    auto out = curate(records, lookup, *backends.embedder, *backends.cache, config.curation, diagnostics);

    std::string contrastive;
    for (const auto& c : out.contrastive) {
        contrastive += contrastive_to_json(c) + "\n";
    }
    write_file(args.out_contrastive, contrastive);
    std::string rerank;
    for (const auto& r : out.rerank) {
        rerank += rerank_instance_to_json(r) + "\n";
    }
    write_file(args.out_rerank, rerank);
    if (args.table) {
        write_file(*args.table, render_language_table(out.table));
    }
    backends.persist(config);
    return out;
}

EvalReport cmd_eval(const EvalArgs& args, const RunConfig& config, Diagnostics* diagnostics) {
    const auto predictions = load_predictions(args.predictions);
    const auto instances = load_bench_instances(args.instances);
    auto report = evaluate(predictions, instances, args.ks, diagnostics);
    report.strata["gold_count"] = stratify_by_gold_count(instances, predictions, 10);
    if (args.corpus) {
        const auto corpus = load_corpus(*args.corpus);
        auto backends = make_backends(config, diagnostics);
        auto overlap = stratify_by_overlap(instances, predictions, corpus, *backends.embedder, *backends.cache, {},
                                           diagnostics);
        report.strata["lexical_overlap"] = std::move(overlap.lexical);
        report.strata["semantic_overlap"] = std::move(overlap.semantic);
        backends.persist(config);
    }
    write_file(args.out, report_to_json(report));
    if (args.table) {
        write_file(*args.table, render_report_table(report));
    }
    if (args.csv) {
        write_file(*args.csv, render_strata_csv(report));
    }
    return report;
}

} // namespace locrank
