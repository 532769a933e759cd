#include "knowflow/graph.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace knowflow {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string quote_list(const std::vector<std::string>& ids) {
    std::string out = "{";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) out += ", ";
        out += ids[i];
    }
    out += "}";
    return out;
}

} // namespace

TaskType task_type_from_string(const std::string& token) {
    if (token == "search") return TaskType::search;
    if (token == "solve") return TaskType::solve;
    if (token == "answer") return TaskType::answer;
    throw ParseError("unknown task type \"" + token + "\"");
}

std::string to_string(TaskType type) {
    switch (type) {
        case TaskType::search: return "search";
        case TaskType::solve: return "solve";
        case TaskType::answer: return "answer";
    }
    return "answer";
}

NodeState node_state_from_string(const std::string& token) {
    if (token == "pending") return NodeState::pending;
    if (token == "running") return NodeState::running;
    if (token == "success") return NodeState::success;
    if (token == "failure") return NodeState::failure;
    throw ParseError("unknown node state \"" + token + "\"");
}

std::string to_string(NodeState state) {
    switch (state) {
        case NodeState::pending: return "pending";
        case NodeState::running: return "running";
        case NodeState::success: return "success";
        case NodeState::failure: return "failure";
    }
    return "pending";
}

bool is_terminal(NodeState state) {
    return state == NodeState::success || state == NodeState::failure;
}

std::string ValidationReport::summary() const {
    if (ok()) return "ok";
    std::ostringstream out;
    for (std::size_t i = 0; i < violations.size(); ++i) {
        if (i > 0) out << "; ";
        out << violations[i].code << ": " << violations[i].message;
    }
    return out.str();
}

const FlowNode* FlowGraph::find_node(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

FlowNode* FlowGraph::find_node(const std::string& id) {
    for (auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

const FlowEdge* FlowGraph::find_edge(const std::string& from, const std::string& to) const {
    for (const auto& e : edges)
        if (e.from == from && e.to == to) return &e;
    return nullptr;
}

std::vector<std::string> FlowGraph::predecessors(const std::string& id) const {
    std::vector<std::string> out;
    for (const auto& e : edges)
        if (e.to == id) out.push_back(e.from);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> FlowGraph::successors(const std::string& id) const {
    std::vector<std::string> out;
    for (const auto& e : edges)
        if (e.from == id) out.push_back(e.to);
    std::sort(out.begin(), out.end());
    return out;
}

FlowGraph new_graph(const std::string& query) {
    if (query.empty()) throw InvalidInputError("query must be non-empty");
    FlowGraph g;
    g.nodes.push_back(FlowNode{"task", TaskType::answer, query, NodeState::pending, std::nullopt});
    g.query_node_id = "task";
    return g;
}

ValidationReport validate(const FlowGraph& graph) {
    ValidationReport report;
    auto add = [&report](std::string code, std::string subject, std::string message) {
        report.violations.push_back({std::move(code), std::move(subject), std::move(message)});
    };

    std::set<std::string> ids;
    for (const auto& n : graph.nodes) {
        if (n.id.empty()) add("empty-node-id", n.id, "node with empty id");
        if (!ids.insert(n.id).second)
            add("duplicate-node-id", n.id, "duplicate node id " + n.id);
        if (n.description.empty())
            add("empty-description", n.id, "node " + n.id + " has an empty description");
        if (n.state == NodeState::success) {
            if (!n.context || n.context->empty())
                add("context-state-mismatch", n.id,
                    "success node " + n.id + " must carry a non-empty context");
        } else if (n.context) {
            add("context-state-mismatch", n.id,
                "node " + n.id + " carries a context but is " + to_string(n.state));
        }
    }

    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& e : graph.edges) {
        const std::string subject = e.from + "->" + e.to;
        if (e.from == e.to) add("self-loop", subject, "self-loop on " + e.from);
        for (const auto& endpoint : {e.from, e.to}) {
            if (!ids.count(endpoint))
                add("dangling-endpoint", endpoint,
                    "edge " + subject + " references absent node " + endpoint);
        }
        if (!pairs.insert({e.from, e.to}).second)
            add("duplicate-edge", subject, "duplicate edge " + subject);
    }

    // Query node: present, answer-type, no outgoing edges, and the only answer node.
    const FlowNode* query = graph.find_node(graph.query_node_id);
    if (graph.query_node_id.empty() || query == nullptr) {
        add("query-node-missing", graph.query_node_id,
            "query node \"" + graph.query_node_id + "\" does not exist");
    } else {
        if (query->task_type != TaskType::answer)
            add("query-node-not-answer", query->id,
                "query node " + query->id + " is not answer-type");
        for (const auto& e : graph.edges)
            if (e.from == query->id && ids.count(e.to)) {
                add("query-node-outgoing", query->id,
                    "query node " + query->id + " has outgoing edge to " + e.to);
                break;
            }
    }
    for (const auto& n : graph.nodes)
        if (n.task_type == TaskType::answer && n.id != graph.query_node_id)
            add("extra-answer-node", n.id,
                "answer-type node " + n.id + " is not the query node");

    // Cycle detection: iterative DFS over well-formed edges; a back edge is a cycle.
    std::map<std::string, int> color; // 0 white, 1 gray, 2 black
    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& e : graph.edges)
        if (e.from != e.to && ids.count(e.from) && ids.count(e.to))
            adj[e.from].push_back(e.to);
    for (auto& [_, nbrs] : adj) std::sort(nbrs.begin(), nbrs.end());

    bool cycle_reported = false;
    for (const auto& start : ids) {
        if (color[start] != 0 || cycle_reported) continue;
        std::vector<std::pair<std::string, std::size_t>> stack{{start, 0}};
        std::vector<std::string> path{start};
        color[start] = 1;
        while (!stack.empty() && !cycle_reported) {
            auto& [node, next] = stack.back();
            const auto& nbrs = adj[node];
            if (next < nbrs.size()) {
                const std::string& to = nbrs[next++];
                if (color[to] == 1) {
                    auto it = std::find(path.begin(), path.end(), to);
                    std::vector<std::string> cycle(it, path.end());
                    std::sort(cycle.begin(), cycle.end());
                    add("cycle", quote_list(cycle), "cycle " + quote_list(cycle));
                    cycle_reported = true;
                } else if (color[to] == 0) {
                    color[to] = 1;
                    stack.push_back({to, 0});
                    path.push_back(to);
                }
            } else {
                color[node] = 2;
                stack.pop_back();
                path.pop_back();
            }
        }
    }

    return report;
}

void require_valid(const FlowGraph& graph) {
    ValidationReport report = validate(graph);
    if (!report.ok())
        throw StructuralError("invalid graph: " + report.summary(), std::move(report));
}

std::vector<std::string> frontier(const FlowGraph& graph) {
    require_valid(graph);
    std::vector<std::string> out;
    for (const auto& n : graph.nodes) {
        if (n.state != NodeState::pending) continue;
        bool ready = true;
        for (const auto& e : graph.edges) {
            if (e.to != n.id) continue;
            if (graph.find_node(e.from)->state != NodeState::success) {
                ready = false;
                break;
            }
        }
        if (ready) out.push_back(n.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::vector<std::string>> topological_layers(const FlowGraph& graph) {
    require_valid(graph);
    // Longest predecessor chain via DP in dependency order.
    std::map<std::string, int> depth;
    std::map<std::string, std::vector<std::string>> preds;
    for (const auto& e : graph.edges) preds[e.to].push_back(e.from);

    // Kahn-style peel so every node's predecessors are resolved before it.
    std::map<std::string, int> indegree;
    std::map<std::string, std::vector<std::string>> adj;
    for (const auto& n : graph.nodes) indegree[n.id] = 0;
    for (const auto& e : graph.edges) {
        indegree[e.to]++;
        adj[e.from].push_back(e.to);
    }
    std::vector<std::string> queue;
    for (const auto& [id, deg] : indegree)
        if (deg == 0) queue.push_back(id);
    while (!queue.empty()) {
        std::string id = queue.back();
        queue.pop_back();
        int d = 0;
        for (const auto& p : preds[id]) d = std::max(d, depth[p] + 1);
        depth[id] = d;
        for (const auto& to : adj[id])
            if (--indegree[to] == 0) queue.push_back(to);
    }

    int max_depth = 0;
    for (const auto& [_, d] : depth) max_depth = std::max(max_depth, d);
    std::vector<std::vector<std::string>> layers(static_cast<std::size_t>(max_depth) + 1);
    for (const auto& n : graph.nodes) layers[static_cast<std::size_t>(depth[n.id])].push_back(n.id);
    for (auto& layer : layers) std::sort(layer.begin(), layer.end());
    return layers;
}

std::string strip_trailing_commas(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            out += c;
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') {
            in_string = true;
            out += c;
            continue;
        }
        if (c == ',') {
            std::size_t j = i + 1;
            while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            if (j < text.size() && (text[j] == ']' || text[j] == '}')) continue; // drop it
        }
        out += c;
    }
    return out;
}

std::string extract_json_object(const std::string& text) {
    std::string last;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '{') {
            ++i;
            continue;
        }
        // Balanced scan from this brace, string- and escape-aware.
        int depth = 0;
        bool in_string = false, escaped = false;
        std::size_t end = std::string::npos;
        for (std::size_t j = i; j < text.size(); ++j) {
            char c = text[j];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                end = j;
                break;
            }
        }
        if (end == std::string::npos) {
            ++i;
            continue;
        }
        std::string candidate = text.substr(i, end - i + 1);
        if (json::accept(strip_trailing_commas(candidate))) {
            last = std::move(candidate);
            i = end + 1; // do not scan inside an accepted object
        } else {
            ++i;
        }
    }
    return last;
}

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t byte) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

void reject_unknown_fields(const json& obj, const std::set<std::string>& allowed,
                           const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ParseError("unknown field \"" + it.key() + "\" in " + where);
}

std::string require_string(const json& obj, const std::string& key, const std::string& where) {
    if (!obj.contains(key))
        throw ParseError("missing field \"" + key + "\" in " + where);
    if (!obj.at(key).is_string())
        throw ParseError("field \"" + key + "\" in " + where + " must be a string");
    return obj.at(key).get<std::string>();
}

} // namespace

FlowGraph graph_from_json(const json& doc) {
    if (!doc.is_object()) throw ParseError("graph document must be an object");
    reject_unknown_fields(doc, {"nodes", "edges"}, "graph");
    if (!doc.contains("nodes") || !doc.at("nodes").is_array())
        throw ParseError("graph requires a \"nodes\" array");
    if (!doc.contains("edges") || !doc.at("edges").is_array())
        throw ParseError("graph requires an \"edges\" array");

    FlowGraph g;
    for (const auto& item : doc.at("nodes")) {
        if (!item.is_object()) throw ParseError("node entries must be objects");
        reject_unknown_fields(item, {"node_id", "task_type", "content", "state", "context"},
                              "node");
        FlowNode node;
        node.id = require_string(item, "node_id", "node");
        node.task_type = task_type_from_string(require_string(item, "task_type", "node " + node.id));
        node.description = require_string(item, "content", "node " + node.id);
        if (item.contains("state"))
            node.state = node_state_from_string(require_string(item, "state", "node " + node.id));
        if (item.contains("context"))
            node.context = require_string(item, "context", "node " + node.id);
        g.nodes.push_back(std::move(node));
    }
    for (const auto& item : doc.at("edges")) {
        if (!item.is_object()) throw ParseError("edge entries must be objects");
        reject_unknown_fields(item, {"from", "to", "relationship"}, "edge");
        FlowEdge edge;
        edge.from = require_string(item, "from", "edge");
        edge.to = require_string(item, "to", "edge");
        edge.relation = require_string(item, "relationship", "edge " + edge.from + "->" + edge.to);
        g.edges.push_back(std::move(edge));
    }

    // The query node is the unique answer-type sink.
    std::vector<std::string> answer_sinks;
    for (const auto& n : g.nodes) {
        if (n.task_type != TaskType::answer) continue;
        bool has_outgoing = false;
        for (const auto& e : g.edges)
            if (e.from == n.id) { has_outgoing = true; break; }
        if (!has_outgoing) answer_sinks.push_back(n.id);
    }
    g.query_node_id = answer_sinks.size() == 1 ? answer_sinks.front() : "";

    require_valid(g);
    return g;
}

FlowGraph parse_graph(const std::string& text) {
    json doc;
    try {
        doc = json::parse(strip_trailing_commas(text));
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("graph parse error: ") + e.what(),
                         line_of_offset(text, e.byte));
    }
    return graph_from_json(doc);
}

ordered_json graph_to_json(const FlowGraph& graph) {
    FlowGraph sorted = graph;
    std::sort(sorted.nodes.begin(), sorted.nodes.end(),
              [](const FlowNode& a, const FlowNode& b) { return a.id < b.id; });
    std::sort(sorted.edges.begin(), sorted.edges.end(), [](const FlowEdge& a, const FlowEdge& b) {
        return std::tie(a.from, a.to) < std::tie(b.from, b.to);
    });

    ordered_json doc;
    doc["nodes"] = ordered_json::array();
    for (const auto& n : sorted.nodes) {
        ordered_json item;
        item["node_id"] = n.id;
        item["task_type"] = to_string(n.task_type);
        item["content"] = n.description;
        if (n.state != NodeState::pending) item["state"] = to_string(n.state);
        if (n.context) item["context"] = *n.context;
        doc["nodes"].push_back(std::move(item));
    }
    doc["edges"] = ordered_json::array();
    for (const auto& e : sorted.edges) {
        ordered_json item;
        item["from"] = e.from;
        item["to"] = e.to;
        item["relationship"] = e.relation;
        doc["edges"].push_back(std::move(item));
    }
    return doc;
}

std::string serialize_graph(const FlowGraph& graph) {
    require_valid(graph);
    return graph_to_json(graph).dump(1);
}

std::string to_dot(const FlowGraph& graph) {
    require_valid(graph);
    FlowGraph sorted = graph;
    std::sort(sorted.nodes.begin(), sorted.nodes.end(),
              [](const FlowNode& a, const FlowNode& b) { return a.id < b.id; });
    std::sort(sorted.edges.begin(), sorted.edges.end(), [](const FlowEdge& a, const FlowEdge& b) {
        return std::tie(a.from, a.to) < std::tie(b.from, b.to);
    });

    auto escape = [](const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c == '"' || c == '\\') out += '\\';
            out += c;
        }
        return out;
    };
    auto fill = [](NodeState state) -> const char* {
        switch (state) {
            case NodeState::pending: return "white";
            case NodeState::running: return "lightblue";
            case NodeState::success: return "palegreen";
            case NodeState::failure: return "lightcoral";
        }
        return "white";
    };

    std::ostringstream out;
    out << "digraph flow {\n";
    out << "  rankdir=\"LR\";\n";
    out << "  node [shape=box, style=filled];\n";
    for (const auto& n : sorted.nodes) {
        out << "  \"" << escape(n.id) << "\" [label=\"" << escape(n.id) << ": "
            << to_string(n.task_type) << "\", fillcolor=" << fill(n.state) << "];\n";
    }
    for (const auto& e : sorted.edges) {
        out << "  \"" << escape(e.from) << "\" -> \"" << escape(e.to) << "\"";
        if (!e.relation.empty()) out << " [label=\"" << escape(e.relation) << "\"]";
        out << ";\n";
    }
    out << "}\n";
    return out.str();
}

bool structurally_equal(const FlowGraph& a, const FlowGraph& b) {
    if (a.query_node_id != b.query_node_id) return false;
    if (a.nodes.size() != b.nodes.size() || a.edges.size() != b.edges.size()) return false;
    for (const auto& n : a.nodes) {
        const FlowNode* other = b.find_node(n.id);
        if (!other || other->task_type != n.task_type || other->description != n.description ||
            other->state != n.state || other->context != n.context)
            return false;
    }
    for (const auto& e : a.edges) {
        const FlowEdge* other = b.find_edge(e.from, e.to);
        if (!other || other->relation != e.relation) return false;
    }
    return true;
}

} // namespace knowflow
