#pragma once

#include <string>
#include <utility>
#include <vector>

#include "knowflow/backend.hpp"
#include "knowflow/graph.hpp"

namespace knowflow {

enum class PlannerMode { flow, sequential };

PlannerMode planner_mode_from_string(const std::string& token);
std::string to_string(PlannerMode mode);

struct PlannerConfig {
    int max_iterations = 8;  // cap on expansion steps
    int repair_attempts = 2; // re-prompts allowed per step
    PlannerMode planner_mode = PlannerMode::flow;
    std::string instructions;            // empty: built-in flow prompt
    std::string sequential_instructions; // empty: built-in sequential prompt
};

/// One accepted expansion: before/after graphs plus the delta the gate verified.
struct ExpansionStep {
    int iteration = 0;
    FlowGraph before;
    FlowGraph after;
    bool changed = false;
    std::vector<std::string> added_node_ids;
    std::vector<std::pair<std::string, std::string>> added_edge_pairs;
    std::vector<BackendExchange> exchanges; // including repair re-prompts
};

/// The exact single-message planner request for `graph` (also the user side
/// of exported dialogue records).
std::string planner_request_text(const FlowGraph& graph, const PlannerConfig& config);

/// Asks the planner backend for a one-step expansion and gates the reply:
/// the result must be a validating superset of the input whose new edges all
/// touch new nodes, with every pre-existing node and edge untouched and every
/// node still pending. Rejected replies are re-prompted up to repair_attempts
/// times before a PlannerOutputError carrying the last raw output.
ExpansionStep expand_once(const FlowGraph& graph, Backend& backend, const PlannerConfig& config);

struct PlanResult {
    FlowGraph graph;
    std::vector<ExpansionStep> steps;
    bool reached_fixpoint = false;
};

/// Iterates expand_once from the single query node until the backend echoes
/// the graph unchanged (fixpoint) or max_iterations steps were accepted.
PlanResult plan(const std::string& query, Backend& backend, const PlannerConfig& config);

/// Linear-pipeline baseline: asks the backend for an ordered step list and
/// builds the chain s1 -> ... -> sn -> query node. When out_exchanges is
/// given it receives every backend exchange made (including repairs).
FlowGraph plan_sequential(const std::string& query, Backend& backend, const PlannerConfig& config,
                          std::vector<BackendExchange>* out_exchanges = nullptr);

} // namespace knowflow
