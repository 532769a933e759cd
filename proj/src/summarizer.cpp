#include "knowflow/summarizer.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace knowflow {

namespace {

const char* kQaInstructions =
    "Answer the question using only the knowledge entries provided. Treat unresolved items "
    "as gaps and caveat the answer if they matter. State the answer directly.";

const char* kReportInstructions =
    "Write a complete, well-structured report that addresses the objective, synthesizing "
    "every knowledge entry provided. Note unresolved items where they limit coverage.";

/// Node ids ordered by topological layer, then lexicographically.
std::vector<std::string> layer_order(const FlowGraph& graph) {
    std::vector<std::string> order;
    for (const auto& layer : topological_layers(graph))
        for (const auto& id : layer) order.push_back(id);
    return order;
}

} // namespace

SummaryMode summary_mode_from_string(const std::string& token) {
    if (token == "qa") return SummaryMode::qa;
    if (token == "report") return SummaryMode::report;
    throw ParseError("unknown summary mode \"" + token + "\"");
}

std::string to_string(SummaryMode mode) { return mode == SummaryMode::qa ? "qa" : "report"; }

std::vector<AnswerInput> answer_inputs(const FlowGraph& graph, SummaryMode mode) {
    require_valid(graph);
    const FlowNode* query = graph.find_node(graph.query_node_id);
    if (is_terminal(query->state))
        throw AlreadyConcludedError("query node " + query->id + " is already " +
                                    to_string(query->state));

    std::set<std::string> eligible;
    if (mode == SummaryMode::qa) {
        for (const auto& pred : graph.predecessors(query->id)) eligible.insert(pred);
    } else {
        for (const auto& node : graph.nodes)
            if (node.id != query->id) eligible.insert(node.id);
    }

    std::vector<AnswerInput> inputs;
    for (const auto& id : layer_order(graph)) {
        if (!eligible.count(id)) continue;
        const FlowNode* node = graph.find_node(id);
        if (node->state != NodeState::success) continue;
        inputs.push_back({node->id, node->task_type, node->description, *node->context});
    }
    return inputs;
}

ConcludeResult conclude(const FlowGraph& graph, SummaryMode mode, Backend& backend,
                        const std::string& instructions) {
    std::vector<AnswerInput> inputs = answer_inputs(graph, mode);
    const FlowNode* query = graph.find_node(graph.query_node_id);

    // Unresolved items: relevant nodes that did not produce knowledge.
    std::vector<std::string> unresolved;
    if (mode == SummaryMode::qa) {
        for (const auto& pred : graph.predecessors(query->id)) {
            const FlowNode* node = graph.find_node(pred);
            if (node->state != NodeState::success) unresolved.push_back(node->description);
        }
    } else {
        for (const auto& id : layer_order(graph)) {
            if (id == query->id) continue;
            const FlowNode* node = graph.find_node(id);
            if (node->state != NodeState::success) unresolved.push_back(node->description);
        }
    }

    std::ostringstream prompt;
    prompt << (mode == SummaryMode::qa ? "Question: " : "Objective: ") << query->description
           << "\n\nKnowledge:";
    if (inputs.empty()) prompt << "\n(none)";
    for (const auto& input : inputs)
        prompt << "\n[" << input.node_id << "] (" << to_string(input.task_type) << ") "
               << input.description << "\n" << input.context;
    prompt << "\n\nUnresolved:";
    if (unresolved.empty()) prompt << "\n(none)";
    for (const auto& item : unresolved) prompt << "\n- " << item;

    const std::string& system = instructions.empty()
                                    ? (mode == SummaryMode::qa ? kQaInstructions
                                                               : kReportInstructions)
                                    : instructions;
    std::vector<Message> messages{{Role::system, system}, {Role::user, prompt.str()}};

    ConcludeResult result;
    result.graph = graph;
    FlowNode* node = result.graph.find_node(graph.query_node_id);
    try {
        result.exchange = backend.complete(messages);
    } catch (const BackendError& e) {
        node->state = NodeState::failure;
        node->context.reset();
        throw ConcludeError(std::string("conclusion failed: ") + e.what(),
                            std::move(result.graph));
    }

    node->state = NodeState::success;
    node->context = result.exchange.response.empty() ? "(empty answer)"
                                                     : result.exchange.response;
    result.conclusion.answer = result.exchange.response;
    result.conclusion.mode = mode;
    for (const auto& input : inputs) result.conclusion.sources.push_back(input.node_id);
    require_valid(result.graph);
    return result;
}

} // namespace knowflow
