#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "knowflow/errors.hpp"

namespace knowflow {

enum class TaskType { search, solve, answer };

/// Parses one of "search" | "solve" | "answer"; anything else is a ParseError.
TaskType task_type_from_string(const std::string& token);
std::string to_string(TaskType type);

enum class NodeState { pending, running, success, failure };

NodeState node_state_from_string(const std::string& token);
std::string to_string(NodeState state);
bool is_terminal(NodeState state);

/// One typed subtask node of the knowledge flow.
struct FlowNode {
    std::string id;
    TaskType task_type = TaskType::solve;
    std::string description;
    NodeState state = NodeState::pending;
    std::optional<std::string> context; // distilled knowledge, present iff success
};

/// Directed dependency: knowledge of `from` conditions the execution of `to`.
struct FlowEdge {
    std::string from;
    std::string to;
    std::string relation;
};

struct Violation {
    std::string code;    // stable identifier: "cycle", "dangling-endpoint", ...
    std::string subject; // offending node/edge identifier(s)
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    std::string summary() const;
};

/// Violations found by validate(), carried as an exception where a valid graph is required.
class StructuralError : public Error {
public:
    StructuralError(const std::string& msg, ValidationReport report)
        : Error(msg), report_(std::move(report)) {}
    const ValidationReport& report() const { return report_; }

private:
    ValidationReport report_;
};

/// The knowledge flow: a DAG of typed subtask nodes with relation-labeled
/// dependency edges and a designated answer-type sink holding the objective.
/// Values are immutable once validated; every mutation builds a new graph.
struct FlowGraph {
    std::vector<FlowNode> nodes;
    std::vector<FlowEdge> edges;
    std::string query_node_id;

    const FlowNode* find_node(const std::string& id) const;
    FlowNode* find_node(const std::string& id);
    const FlowEdge* find_edge(const std::string& from, const std::string& to) const;
    bool has_node(const std::string& id) const { return find_node(id) != nullptr; }
    bool has_edge(const std::string& from, const std::string& to) const {
        return find_edge(from, to) != nullptr;
    }
    /// Direct dependency providers of `id`, sorted by node id.
    std::vector<std::string> predecessors(const std::string& id) const;
    /// Direct dependents of `id`, sorted by node id.
    std::vector<std::string> successors(const std::string& id) const;
};

/// Initial flow: a single pending answer-type node with id "task" holding the query.
FlowGraph new_graph(const std::string& query);

/// Checks every structural invariant; violations are data, not failures.
ValidationReport validate(const FlowGraph& graph);

/// Throws StructuralError when validate() finds violations.
void require_valid(const FlowGraph& graph);

/// Pending nodes whose direct predecessors are all successful, sorted by id.
/// Nodes behind a failed or unfinished predecessor are excluded.
std::vector<std::string> frontier(const FlowGraph& graph);

/// Layer k holds the nodes whose longest predecessor chain has length k;
/// ids are sorted within each layer and the flattening is a topological order.
std::vector<std::vector<std::string>> topological_layers(const FlowGraph& graph);

/// Parses the interchange format (optionally with per-node state/context).
/// The returned graph passes validate(); query_node_id is inferred as the
/// unique answer-type sink. Tolerates trailing commas, rejects unknown fields.
FlowGraph parse_graph(const std::string& text);

/// Canonical interchange text: nodes sorted by id, edges by (from, to);
/// state/context emitted only when they deviate from a fresh pending node.
std::string serialize_graph(const FlowGraph& graph);

/// Graphviz text with one statement per node ("id: task_type", styled by
/// state) and per edge (labeled with its relation when non-empty).
std::string to_dot(const FlowGraph& graph);

/// Equality on node/edge/query content, ignoring declaration order.
bool structurally_equal(const FlowGraph& a, const FlowGraph& b);

nlohmann::ordered_json graph_to_json(const FlowGraph& graph);
FlowGraph graph_from_json(const nlohmann::json& doc);

/// Removes "," before "]" or "}" outside string literals. The interchange
/// examples in the wild (and LLM output) routinely carry trailing commas.
std::string strip_trailing_commas(const std::string& text);

/// Last parseable balanced JSON object embedded in `text` (backends wrap
/// payloads in prose); empty string when none parses.
std::string extract_json_object(const std::string& text);

} // namespace knowflow
