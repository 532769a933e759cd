#pragma once

#include <string>
#include <vector>

#include "knowflow/backend.hpp"
#include "knowflow/graph.hpp"

namespace knowflow {

enum class SummaryMode { qa, report };

SummaryMode summary_mode_from_string(const std::string& token);
std::string to_string(SummaryMode mode);

struct Conclusion {
    std::string answer;
    SummaryMode mode = SummaryMode::qa;
    std::vector<std::string> sources; // node ids whose contexts were consumed
};

struct AnswerInput {
    std::string node_id;
    TaskType task_type = TaskType::solve;
    std::string description;
    std::string context;
};

/// Knowledge entries the conclusion consumes, in topological-layer order then
/// node id: qa takes the successful direct predecessors of the query node,
/// report takes every successful node.
std::vector<AnswerInput> answer_inputs(const FlowGraph& graph, SummaryMode mode);

struct ConcludeResult {
    FlowGraph graph;
    Conclusion conclusion;
    BackendExchange exchange;
};

/// Backend failure during conclusion; carries the graph with the query node
/// marked failure so the orchestrator can record the degraded end state.
class ConcludeError : public BackendError {
public:
    ConcludeError(const std::string& msg, FlowGraph graph)
        : BackendError(msg), graph_(std::move(graph)) {}
    const FlowGraph& graph() const { return graph_; }

private:
    FlowGraph graph_;
};

/// Executes the query node with one backend exchange over answer_inputs.
/// Failed (and still-pending) relevant nodes are listed as unresolved items so
/// the backend can caveat the answer. On success the query node turns success
/// with the answer as its context; on backend failure it turns failure and the
/// error propagates.
ConcludeResult conclude(const FlowGraph& graph, SummaryMode mode, Backend& backend,
                        const std::string& instructions = "");

} // namespace knowflow
