#pragma once

#include "locrank/agent.hpp"
#include "support.hpp"

#include <memory>

namespace testing {

inline std::string search_reply(const std::string& query, const std::string& thought = "looking") {
    nlohmann::json args = {{"issue_description", query}};
    nlohmann::json action = {{"name", "search"}, {"arguments", args}};
    return "THOUGHT: " + thought + "\nREFORMULATION: try \"" + query + "\"\nACTION:\n" + action.dump();
}

inline std::string finish_reply() {
    return "THOUGHT: done\nREFORMULATION: none\nACTION:\n{\"name\": \"finish\", \"arguments\": null}";
}

// Units whose texts are "<topic> uN": a one-word query for a topic retrieves
// exactly that topic's units ahead of everything else.
inline locrank::Corpus topic_corpus(const std::vector<std::pair<std::string, int>>& topics) {
    std::vector<locrank::CodeUnit> units;
    int n = 0;
    for (const auto& [topic, count] : topics) {
        for (int i = 0; i < count; ++i, ++n) {
            char name[32];
            std::snprintf(name, sizeof(name), "%s_%02d", topic.c_str(), i);
            units.push_back(make_unit("src/" + topic + ".py", name, i * 3 + 1, topic + " u" + std::to_string(n)));
        }
    }
    return locrank::Corpus("topics", units);
}

struct AgentRig {
    explicit AgentRig(std::vector<std::string> agent_script)
        : agent_chat(locrank::ScriptedChat::sequence(std::move(agent_script))),
          rerank_chat(locrank::identity_ranker()),
          cache(mock.id()) {}

    locrank::AgentBackends backends() { return {mock, cache, *agent_chat, rerank_chat, &diagnostics}; }

    locrank::MockEmbedder mock;
    std::unique_ptr<locrank::ScriptedChat> agent_chat;
    locrank::ScriptedChat rerank_chat;
    locrank::EmbeddingCache cache;
    locrank::Diagnostics diagnostics;
};

} // namespace testing
