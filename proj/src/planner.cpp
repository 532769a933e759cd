#include "knowflow/planner.hpp"

#include <algorithm>
#include <optional>
#include <set>

#include <nlohmann/json.hpp>

namespace knowflow {

using nlohmann::json;

namespace {

const char* kFlowInstructions =
    "You are a knowledge-flow planner. Expand the flow below by one step: for any node "
    "that needs decomposition or supporting evidence, add successor nodes (task_type "
    "\"search\" or \"solve\") together with the dependency edges that connect them. Keep "
    "every existing node and edge exactly as it is. Reply with the complete updated graph "
    "as JSON {\"nodes\": [{\"node_id\", \"task_type\", \"content\"}], \"edges\": "
    "[{\"from\", \"to\", \"relationship\"}]}. If no expansion is needed, reply with the "
    "input graph unchanged.";

const char* kSequentialInstructions =
    "You are a task planner. Decompose the objective into an ordered list of steps that "
    "will be executed strictly one after another. Reply with JSON {\"steps\": "
    "[{\"task_type\": \"search\"|\"solve\", \"content\": \"...\"}]}. Reply with "
    "{\"steps\": []} if the objective needs no decomposition.";

/// Why a planner reply fails the expansion gate, or nullopt when it passes.
std::optional<std::string> gate_reason(const FlowGraph& before, const FlowGraph& after,
                                       const std::vector<std::string>& added_nodes) {
    for (const auto& node : before.nodes) {
        const FlowNode* other = after.find_node(node.id);
        if (!other) return "node " + node.id + " was removed";
        if (other->task_type != node.task_type || other->description != node.description)
            return "node " + node.id + " was modified";
    }
    for (const auto& edge : before.edges) {
        const FlowEdge* other = after.find_edge(edge.from, edge.to);
        if (!other) return "edge " + edge.from + "->" + edge.to + " was removed";
        if (other->relation != edge.relation)
            return "edge " + edge.from + "->" + edge.to + " was modified";
    }
    for (const auto& node : after.nodes)
        if (node.state != NodeState::pending || node.context)
            return "node " + node.id + " carries execution state; planning must leave all nodes pending";
    std::set<std::string> added(added_nodes.begin(), added_nodes.end());
    for (const auto& edge : after.edges) {
        if (before.has_edge(edge.from, edge.to)) continue;
        if (!added.count(edge.from) && !added.count(edge.to))
            return "added edge " + edge.from + "->" + edge.to + " connects two pre-existing nodes";
    }
    return std::nullopt;
}

std::string chain_id(int index) { return "s" + std::to_string(index); }

} // namespace

PlannerMode planner_mode_from_string(const std::string& token) {
    if (token == "flow") return PlannerMode::flow;
    if (token == "sequential") return PlannerMode::sequential;
    throw ParseError("unknown planner mode \"" + token + "\"");
}

std::string to_string(PlannerMode mode) {
    return mode == PlannerMode::flow ? "flow" : "sequential";
}

std::string planner_request_text(const FlowGraph& graph, const PlannerConfig& config) {
    const std::string& instructions =
        config.instructions.empty() ? kFlowInstructions : config.instructions;
    return instructions + "\n\nInput graph:\n" + serialize_graph(graph);
}

ExpansionStep expand_once(const FlowGraph& graph, Backend& backend, const PlannerConfig& config) {
    require_valid(graph);
    for (const auto& node : graph.nodes)
        if (node.state != NodeState::pending)
            throw InvalidInputError("expand_once requires an all-pending graph");

    ExpansionStep step;
    step.before = graph;

    std::vector<Message> messages{{Role::user, planner_request_text(graph, config)}};
    std::string last_reason;
    for (int attempt = 0; attempt <= config.repair_attempts; ++attempt) {
        BackendExchange exchange = backend.complete(messages);
        step.exchanges.push_back(exchange);

        std::string reason;
        try {
            const std::string payload = extract_json_object(exchange.response);
            if (payload.empty())
                throw ParseError("reply contains no graph object");
            FlowGraph after = parse_graph(payload);
            std::vector<std::string> added_nodes;
            for (const auto& node : after.nodes)
                if (!graph.has_node(node.id)) added_nodes.push_back(node.id);
            std::sort(added_nodes.begin(), added_nodes.end());

            auto gate = gate_reason(graph, after, added_nodes);
            if (!gate) {
                step.after = std::move(after);
                step.added_node_ids = std::move(added_nodes);
                for (const auto& edge : step.after.edges)
                    if (!graph.has_edge(edge.from, edge.to))
                        step.added_edge_pairs.push_back({edge.from, edge.to});
                std::sort(step.added_edge_pairs.begin(), step.added_edge_pairs.end());
                step.changed = !structurally_equal(graph, step.after);
                return step;
            }
            reason = *gate;
        } catch (const ParseError& e) {
            reason = e.what();
        } catch (const StructuralError& e) {
            reason = e.what();
        }

        last_reason = reason;
        if (attempt < config.repair_attempts) {
            messages.push_back({Role::assistant, exchange.response});
            messages.push_back({Role::user, "That expansion was rejected: " + reason +
                                                ". Reply with the full corrected graph, keeping "
                                                "every existing node and edge unchanged."});
        } else {
            throw PlannerOutputError("planner output rejected after " +
                                         std::to_string(config.repair_attempts) +
                                         " repair attempts: " + reason,
                                     exchange.response);
        }
    }
    throw PlannerOutputError("planner output rejected: " + last_reason, "");
}

PlanResult plan(const std::string& query, Backend& backend, const PlannerConfig& config) {
    if (query.empty()) throw InvalidInputError("query must be non-empty");
    if (config.planner_mode != PlannerMode::flow)
        throw InvalidInputError("plan() requires planner_mode flow");
    if (config.max_iterations < 1)
        throw InvalidInputError("max_iterations must be at least 1");

    PlanResult result;
    result.graph = new_graph(query);
    for (int iteration = 0; iteration < config.max_iterations; ++iteration) {
        ExpansionStep step = expand_once(result.graph, backend, config);
        step.iteration = iteration;
        result.graph = step.after;
        const bool changed = step.changed;
        result.steps.push_back(std::move(step));
        if (!changed) {
            result.reached_fixpoint = true;
            break;
        }
    }
    return result;
}

FlowGraph plan_sequential(const std::string& query, Backend& backend,
                          const PlannerConfig& config,
                          std::vector<BackendExchange>* out_exchanges) {
    if (query.empty()) throw InvalidInputError("query must be non-empty");
    if (config.planner_mode != PlannerMode::sequential)
        throw InvalidInputError("plan_sequential() requires planner_mode sequential");

    const std::string& instructions = config.sequential_instructions.empty()
                                          ? kSequentialInstructions
                                          : config.sequential_instructions;
    std::vector<Message> messages{{Role::user, instructions + "\n\nObjective:\n" + query}};

    for (int attempt = 0; attempt <= config.repair_attempts; ++attempt) {
        BackendExchange exchange = backend.complete(messages);
        if (out_exchanges) out_exchanges->push_back(exchange);
        std::string reason;
        try {
            const std::string payload = extract_json_object(exchange.response);
            if (payload.empty())
                throw ParseError("reply contains no step-list object");
            json doc = json::parse(strip_trailing_commas(payload));
            if (!doc.is_object() || !doc.contains("steps") || !doc.at("steps").is_array())
                throw ParseError("reply must be an object with a \"steps\" array");

            FlowGraph graph = new_graph(query);
            int index = 0;
            for (const auto& item : doc.at("steps")) {
                if (!item.is_object() || !item.contains("content"))
                    throw ParseError("each step needs a \"content\" field");
                FlowNode node;
                node.id = chain_id(++index);
                node.description = item.at("content").get<std::string>();
                node.task_type = task_type_from_string(item.value("task_type", "solve"));
                if (node.task_type == TaskType::answer)
                    throw ParseError("steps cannot be answer-type");
                graph.nodes.push_back(std::move(node));
                if (index > 1)
                    graph.edges.push_back({chain_id(index - 1), chain_id(index), "precedes"});
            }
            if (index > 0) graph.edges.push_back({chain_id(index), "task", "precedes"});
            require_valid(graph);
            return graph;
        } catch (const json::parse_error& e) {
            reason = e.what();
        } catch (const ParseError& e) {
            reason = e.what();
        } catch (const StructuralError& e) {
            reason = e.what();
        }

        if (attempt < config.repair_attempts) {
            messages.push_back({Role::assistant, exchange.response});
            messages.push_back({Role::user,
                                "That plan was rejected: " + reason +
                                    ". Reply with JSON {\"steps\": [{\"task_type\", \"content\"}]}."});
        } else {
            throw PlannerOutputError("sequential planner output not expressible as an ordered "
                                     "step list: " + reason,
                                     exchange.response);
        }
    }
    throw PlannerOutputError("sequential planner produced no usable plan", "");
}

} // namespace knowflow
