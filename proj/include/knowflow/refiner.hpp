#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "knowflow/backend.hpp"
#include "knowflow/graph.hpp"

namespace knowflow {

struct AddNodeOp {
    FlowNode node; // state pending, no context
};
struct DelNodeOp {
    std::string id;
};
struct ModNodeOp {
    std::string id;
    std::optional<std::string> new_description;
    std::optional<TaskType> new_task_type;
};
struct AddEdgeOp {
    std::string from;
    std::string to;
    std::string relation;
};
struct DelEdgeOp {
    std::string from;
    std::string to;
};
struct ModEdgeOp {
    std::string from;
    std::string to;
    std::optional<std::string> new_relation;
    std::optional<std::string> new_from;
    std::optional<std::string> new_to;
};

using GraphOp = std::variant<AddNodeOp, DelNodeOp, ModNodeOp, AddEdgeOp, DelEdgeOp, ModEdgeOp>;

std::string op_kind(const GraphOp& op);

struct RefinementPlan {
    std::vector<GraphOp> ops; // may be empty (no-change refinement)
    std::string rationale;
};

/// Applies one op and returns the new graph (the input is never mutated).
/// DelNode cascades incident edges; a ModNode description change resets the
/// node to pending and clears its context; the query node cannot be deleted
/// or retyped. Results always pass validate().
FlowGraph apply_op(const FlowGraph& graph, const GraphOp& op);

/// Applies ops strictly in order, all-or-nothing: the first failing op raises
/// PlanApplyError (with its index) and the caller's graph is left untouched.
FlowGraph apply_plan(const FlowGraph& graph, const RefinementPlan& plan);

/// Parses the plan wire format {"ops": [...], "rationale": ...}; the literal
/// token "no changes" or an empty ops list denote the empty plan.
RefinementPlan parse_plan(const std::string& text);

nlohmann::ordered_json plan_to_json(const RefinementPlan& plan);

struct RefineConfig {
    int repair_attempts = 2;
    std::string instructions; // empty: built-in refiner prompt
};

struct RefineResult {
    FlowGraph graph;
    RefinementPlan plan;
    bool degraded = false; // repair budget exhausted, empty plan substituted
    int repair_prompts = 0;
    std::vector<BackendExchange> exchanges;
};

/// Shows the refiner backend the full graph (states and contexts included),
/// parses its plan, and applies it transactionally. Unusable plans are
/// re-prompted up to repair_attempts times, then refinement degrades to the
/// empty plan instead of failing the run.
RefineResult refine(const FlowGraph& graph, Backend& backend, const RefineConfig& config = {});

} // namespace knowflow
