#pragma once

#include <algorithm>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "knowflow/backend.hpp"
#include "knowflow/graph.hpp"

namespace knowflow::testing {

inline std::string fixture_path(const std::string& name) {
    return std::string(KNOWFLOW_FIXTURE_DIR) + "/" + name;
}

// The interchange-format example graph: n1 answer sink, n2 solve, n3 search.
inline FlowGraph minimal_graph() {
    FlowGraph g;
    g.nodes.push_back({"n1", TaskType::answer, "<query>", NodeState::pending, std::nullopt});
    g.nodes.push_back({"n2", TaskType::solve, "<subtask>", NodeState::pending, std::nullopt});
    g.nodes.push_back({"n3", TaskType::search, "<subtask>", NodeState::pending, std::nullopt});
    g.edges.push_back({"n2", "n1", "solve subtask"});
    g.edges.push_back({"n3", "n1", "provide information"});
    g.query_node_id = "n1";
    return g;
}

// Verbatim interchange text with trailing commas, as such graphs circulate.
inline const char* minimal_graph_text() {
    return R"({
 "nodes": [
  {"node_id": "n1", "task_type": "answer", "content": "<query>"},
  {"node_id": "n2", "task_type": "solve", "content": "<subtask>"},
  {"node_id": "n3", "task_type": "search", "content": "<subtask>"},
 ],
 "edges": [
  {"from": "n2", "to": "n1", "relationship": "solve subtask"},
  {"from": "n3", "to": "n1", "relationship": "provide information"},
 ]
})";
}

// Three-layer report-style graph: {n3, n4s, n7} -> {n2, n4, n6} -> task.
inline FlowGraph report_graph() {
    FlowGraph g;
    auto node = [&](const std::string& id, TaskType type, const std::string& desc) {
        g.nodes.push_back({id, type, desc, NodeState::pending, std::nullopt});
    };
    node("task", TaskType::answer, "research the latest progress");
    node("n2", TaskType::solve, "synthesize background");
    node("n3", TaskType::search, "collect background");
    node("n4", TaskType::solve, "summarize datasets");
    node("n4s", TaskType::search, "collect datasets");
    node("n6", TaskType::solve, "analyze challenges");
    node("n7", TaskType::search, "collect challenges");
    g.edges.push_back({"n3", "n2", "provides material"});
    g.edges.push_back({"n4s", "n4", "provides material"});
    g.edges.push_back({"n7", "n6", "provides material"});
    g.edges.push_back({"n2", "task", "contributes section"});
    g.edges.push_back({"n4", "task", "contributes section"});
    g.edges.push_back({"n6", "task", "contributes section"});
    g.query_node_id = "task";
    return g;
}

inline std::string padded_id(int i) {
    return "n" + std::string(i < 10 ? "0" : "") + std::to_string(i);
}

// Random DAG with the query node "task" as the only answer-type sink.
// Edges only go from lower to higher index, so acyclicity holds by
// construction. Node states are arbitrary when randomize_states is set.
inline FlowGraph random_dag(std::mt19937& rng, int max_inner_nodes, bool randomize_states) {
    std::uniform_int_distribution<int> count_dist(1, max_inner_nodes);
    const int n = count_dist(rng);
    std::uniform_int_distribution<int> type_dist(0, 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    FlowGraph g;
    for (int i = 0; i < n; ++i) {
        FlowNode node;
        node.id = padded_id(i);
        node.task_type = type_dist(rng) == 0 ? TaskType::search : TaskType::solve;
        node.description = "subtask " + node.id;
        g.nodes.push_back(std::move(node));
    }
    g.nodes.push_back({"task", TaskType::answer, "the objective", NodeState::pending, std::nullopt});
    g.query_node_id = "task";

    const double p = 2.0 / std::max(1, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (coin(rng) < p) g.edges.push_back({padded_id(i), padded_id(j), "feeds"});
    for (int i = 0; i < n; ++i)
        if (coin(rng) < 0.3 || i == n - 1)
            g.edges.push_back({padded_id(i), "task", "supports"});

    if (randomize_states) {
        std::uniform_int_distribution<int> state_dist(0, 3);
        for (auto& node : g.nodes) {
            if (node.id == "task") continue;
            switch (state_dist(rng)) {
                case 0: node.state = NodeState::pending; break;
                case 1: node.state = NodeState::running; break;
                case 2:
                    node.state = NodeState::success;
                    node.context = "ctx-" + node.id;
                    break;
                default: node.state = NodeState::failure; break;
            }
        }
    }
    return g;
}

// Independent Kahn-style peeling acyclicity oracle.
inline bool kahn_is_acyclic(const FlowGraph& g) {
    std::map<std::string, int> indegree;
    for (const auto& n : g.nodes) indegree[n.id] = 0;
    for (const auto& e : g.edges) indegree[e.to]++;
    std::vector<std::string> queue;
    for (const auto& [id, deg] : indegree)
        if (deg == 0) queue.push_back(id);
    std::size_t peeled = 0;
    while (!queue.empty()) {
        std::string id = queue.back();
        queue.pop_back();
        ++peeled;
        for (const auto& e : g.edges)
            if (e.from == id && --indegree[e.to] == 0) queue.push_back(e.to);
    }
    return peeled == g.nodes.size();
}

// Direct transcription of the frontier definition, kept independent of the
// implementation it checks.
inline std::vector<std::string> brute_frontier(const FlowGraph& g) {
    std::vector<std::string> out;
    for (const auto& node : g.nodes) {
        if (node.state != NodeState::pending) continue;
        bool ready = true;
        for (const auto& edge : g.edges)
            if (edge.to == node.id && g.find_node(edge.from)->state != NodeState::success)
                ready = false;
        if (ready) out.push_back(node.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline ScriptedScenario positional_scenario(std::vector<std::string> responses,
                                            bool strict = true) {
    ScriptedScenario scenario;
    scenario.strict = strict;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        ScenarioEntry entry;
        entry.match = ScenarioEntry::Match::position;
        entry.position = i;
        entry.response = std::move(responses[i]);
        scenario.entries.push_back(std::move(entry));
    }
    return scenario;
}

// Planner stub that grows the graph by one node per request, forever.
class AlwaysExpandBackend : public Backend {
public:
    BackendExchange complete(const std::vector<Message>& messages) override {
        BackendExchange exchange;
        exchange.request = messages;
        exchange.fingerprint = fingerprint(messages);
        const std::string& content = messages.front().content;
        auto pos = content.find("Input graph:\n");
        FlowGraph graph = parse_graph(content.substr(pos + 13));
        std::lock_guard<std::mutex> lock(mutex_);
        FlowNode node;
        node.id = "x" + std::to_string(++counter_);
        node.task_type = TaskType::search;
        node.description = "expansion " + std::to_string(counter_);
        graph.nodes.push_back(node);
        graph.edges.push_back({node.id, graph.query_node_id, "supports"});
        exchange.response = serialize_graph(graph);
        return exchange;
    }

private:
    std::mutex mutex_;
    int counter_ = 0;
};

// Deterministic whole-pipeline stub: echoes planning, answers subtasks with
// K(id), distills to CTX[id], refines with "no changes", concludes "ANSWER".
class StubPipelineBackend : public Backend {
public:
    BackendExchange complete(const std::vector<Message>& messages) override {
        BackendExchange exchange;
        exchange.request = messages;
        exchange.fingerprint = fingerprint(messages);
        exchange.response = respond(messages);
        std::lock_guard<std::mutex> lock(mutex_);
        log_.push_back(messages);
        return exchange;
    }

    std::vector<std::vector<Message>> request_log() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return log_;
    }

private:
    static std::string extract(const std::string& text, const std::string& prefix,
                               const std::string& suffix) {
        auto start = text.find(prefix);
        if (start == std::string::npos) return "";
        start += prefix.size();
        auto end = text.find(suffix, start);
        return text.substr(start, end - start);
    }

    std::string respond(const std::vector<Message>& messages) {
        const std::string& head = messages.front().content;
        const std::string& tail = messages.back().content;
        if (head.find("Input graph:\n") != std::string::npos) {
            auto pos = head.find("Input graph:\n");
            return head.substr(pos + 13); // echo: immediate fixpoint
        }
        if (head.find("Condense the execution trajectory") != std::string::npos)
            return "CTX[" + extract(tail, "K(", ")") + "]";
        if (head.find("Current flow:") != std::string::npos ||
            tail.find("Current flow:") != std::string::npos)
            return "no changes";
        if (tail.find("Question: ") != std::string::npos ||
            tail.find("Objective: ") != std::string::npos)
            return "ANSWER";
        // executor request
        return "K(" + extract(tail, "Subtask ", ":") + ")";
    }

    mutable std::mutex mutex_;
    std::vector<std::vector<Message>> log_;
};

// Executor stub that asks for `calls` tool invocations of `tool` per node
// before finishing; used for registry-isolation checks.
class ToolLoopBackend : public Backend {
public:
    ToolLoopBackend(std::string tool, int calls) : tool_(std::move(tool)), calls_(calls) {}

    BackendExchange complete(const std::vector<Message>& messages) override {
        BackendExchange exchange;
        exchange.request = messages;
        exchange.fingerprint = fingerprint(messages);
        if (messages.front().content.find("Condense the execution trajectory") !=
            std::string::npos) {
            exchange.response = "distilled";
            return exchange;
        }
        int tool_turns = 0;
        for (const auto& m : messages)
            if (m.role == Role::tool) ++tool_turns;
        exchange.response =
            tool_turns < calls_
                ? std::string("{\"action\": \"tool_call\", \"tool\": \"") + tool_ +
                      "\", \"arguments\": {\"turn\": " + std::to_string(tool_turns) + "}}"
                : std::string("{\"action\": \"final\", \"status\": \"success\", "
                              "\"content\": \"tool loop done\"}");
        return exchange;
    }

private:
    std::string tool_;
    int calls_;
};

class FailingBackend : public Backend {
public:
    BackendExchange complete(const std::vector<Message>&) override {
        throw BackendError("transport down");
    }
};

class SleepingBackend : public Backend {
public:
    explicit SleepingBackend(std::chrono::milliseconds delay) : delay_(delay) {}
    BackendExchange complete(const std::vector<Message>& messages) override {
        std::this_thread::sleep_for(delay_);
        BackendExchange exchange;
        exchange.request = messages;
        exchange.fingerprint = fingerprint(messages);
        exchange.response = "{\"action\": \"final\", \"status\": \"success\", \"content\": \"slow\"}";
        return exchange;
    }

private:
    std::chrono::milliseconds delay_;
};

} // namespace knowflow::testing
