#include "knowflow/refiner.hpp"

#include <algorithm>
#include <cctype>

namespace knowflow {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const char* kRefinerInstructions =
    "You are a knowledge-flow refiner. Inspect the flow below (execution states and "
    "knowledge contexts included) and improve its structure: repair failed branches, drop "
    "dead weight, add missing subtasks or dependencies. Reply with JSON {\"ops\": [...], "
    "\"rationale\": \"...\"} where each op is one of:\n"
    "  {\"op\": \"AddNode\", \"node_id\": ..., \"task_type\": ..., \"content\": ...}\n"
    "  {\"op\": \"DelNode\", \"node_id\": ...}\n"
    "  {\"op\": \"ModNode\", \"node_id\": ..., \"content\"?: ..., \"task_type\"?: ...}\n"
    "  {\"op\": \"AddEdge\", \"from\": ..., \"to\": ..., \"relationship\": ...}\n"
    "  {\"op\": \"DelEdge\", \"from\": ..., \"to\": ...}\n"
    "  {\"op\": \"ModEdge\", \"from\": ..., \"to\": ..., \"relationship\"?: ..., "
    "\"new_from\"?: ..., \"new_to\"?: ...}\n"
    "Reply \"no changes\" if the flow is already sound.";

void require_node(const FlowGraph& graph, const std::string& id, const std::string& op) {
    if (!graph.has_node(id))
        throw MissingTargetError(op + ": node " + id + " does not exist");
}

void require_edge(const FlowGraph& graph, const std::string& from, const std::string& to,
                  const std::string& op) {
    if (!graph.has_edge(from, to))
        throw MissingTargetError(op + ": edge " + from + "->" + to + " does not exist");
}

FlowGraph finish(FlowGraph graph) {
    require_valid(graph);
    return graph;
}

std::string trimmed_lower(const std::string& text) {
    auto begin = text.find_first_not_of(" \t\r\n\"");
    if (begin == std::string::npos) return "";
    auto end = text.find_last_not_of(" \t\r\n\".");
    std::string out = text.substr(begin, end - begin + 1);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

} // namespace

std::string op_kind(const GraphOp& op) {
    struct Visitor {
        std::string operator()(const AddNodeOp&) const { return "AddNode"; }
        std::string operator()(const DelNodeOp&) const { return "DelNode"; }
        std::string operator()(const ModNodeOp&) const { return "ModNode"; }
        std::string operator()(const AddEdgeOp&) const { return "AddEdge"; }
        std::string operator()(const DelEdgeOp&) const { return "DelEdge"; }
        std::string operator()(const ModEdgeOp&) const { return "ModEdge"; }
    };
    return std::visit(Visitor{}, op);
}

FlowGraph apply_op(const FlowGraph& graph, const GraphOp& op) {
    require_valid(graph);
    FlowGraph out = graph;

    if (const auto* add = std::get_if<AddNodeOp>(&op)) {
        if (add->node.id.empty()) throw InvalidInputError("AddNode: node id must be non-empty");
        if (out.has_node(add->node.id))
            throw DuplicateError("AddNode: node " + add->node.id + " already exists");
        FlowNode node = add->node;
        node.state = NodeState::pending;
        node.context.reset();
        out.nodes.push_back(std::move(node));
        return finish(std::move(out));
    }

    if (const auto* del = std::get_if<DelNodeOp>(&op)) {
        require_node(out, del->id, "DelNode");
        if (del->id == out.query_node_id)
            throw ProtectedNodeError("DelNode: the query node cannot be deleted");
        out.nodes.erase(std::remove_if(out.nodes.begin(), out.nodes.end(),
                                       [&](const FlowNode& n) { return n.id == del->id; }),
                        out.nodes.end());
        // Cascade every incident edge.
        out.edges.erase(std::remove_if(out.edges.begin(), out.edges.end(),
                                       [&](const FlowEdge& e) {
                                           return e.from == del->id || e.to == del->id;
                                       }),
                        out.edges.end());
        return finish(std::move(out));
    }

    if (const auto* mod = std::get_if<ModNodeOp>(&op)) {
        require_node(out, mod->id, "ModNode");
        FlowNode* node = out.find_node(mod->id);
        if (mod->new_task_type && *mod->new_task_type != node->task_type &&
            mod->id == out.query_node_id)
            throw ProtectedNodeError("ModNode: the query node cannot be retyped");
        if (mod->new_task_type) node->task_type = *mod->new_task_type;
        if (mod->new_description && *mod->new_description != node->description) {
            node->description = *mod->new_description;
            // The old outcome no longer answers this node.
            node->state = NodeState::pending;
            node->context.reset();
        }
        return finish(std::move(out));
    }

    if (const auto* add = std::get_if<AddEdgeOp>(&op)) {
        require_node(out, add->from, "AddEdge");
        require_node(out, add->to, "AddEdge");
        if (out.has_edge(add->from, add->to))
            throw StructuralError("AddEdge: duplicate edge " + add->from + "->" + add->to,
                                  ValidationReport{{{"duplicate-edge", add->from + "->" + add->to,
                                                     "duplicate edge"}}});
        out.edges.push_back({add->from, add->to, add->relation});
        return finish(std::move(out));
    }

    if (const auto* del = std::get_if<DelEdgeOp>(&op)) {
        require_edge(out, del->from, del->to, "DelEdge");
        out.edges.erase(std::remove_if(out.edges.begin(), out.edges.end(),
                                       [&](const FlowEdge& e) {
                                           return e.from == del->from && e.to == del->to;
                                       }),
                        out.edges.end());
        return finish(std::move(out));
    }

    const auto& mod = std::get<ModEdgeOp>(op);
    require_edge(out, mod.from, mod.to, "ModEdge");
    const std::string new_from = mod.new_from.value_or(mod.from);
    const std::string new_to = mod.new_to.value_or(mod.to);
    require_node(out, new_from, "ModEdge");
    require_node(out, new_to, "ModEdge");
    FlowEdge updated{new_from, new_to,
                     mod.new_relation.value_or(out.find_edge(mod.from, mod.to)->relation)};
    out.edges.erase(std::remove_if(out.edges.begin(), out.edges.end(),
                                   [&](const FlowEdge& e) {
                                       return e.from == mod.from && e.to == mod.to;
                                   }),
                    out.edges.end());
    if (out.has_edge(updated.from, updated.to))
        throw StructuralError("ModEdge: duplicate edge " + updated.from + "->" + updated.to,
                              ValidationReport{{{"duplicate-edge", updated.from + "->" + updated.to,
                                                 "duplicate edge"}}});
    out.edges.push_back(std::move(updated));
    return finish(std::move(out));
}

FlowGraph apply_plan(const FlowGraph& graph, const RefinementPlan& plan) {
    require_valid(graph);
    FlowGraph out = graph;
    for (std::size_t i = 0; i < plan.ops.size(); ++i) {
        try {
            out = apply_op(out, plan.ops[i]);
        } catch (const StructuralError& e) {
            throw PlanApplyError("op " + std::to_string(i) + " (" + op_kind(plan.ops[i]) +
                                     ") failed: " + e.what(),
                                 i, "structural");
        } catch (const MissingTargetError& e) {
            throw PlanApplyError("op " + std::to_string(i) + " (" + op_kind(plan.ops[i]) +
                                     ") failed: " + e.what(),
                                 i, "missing-target");
        } catch (const DuplicateError& e) {
            throw PlanApplyError("op " + std::to_string(i) + " (" + op_kind(plan.ops[i]) +
                                     ") failed: " + e.what(),
                                 i, "duplicate");
        } catch (const ProtectedNodeError& e) {
            throw PlanApplyError("op " + std::to_string(i) + " (" + op_kind(plan.ops[i]) +
                                     ") failed: " + e.what(),
                                 i, "protected-node");
        } catch (const InvalidInputError& e) {
            throw PlanApplyError("op " + std::to_string(i) + " (" + op_kind(plan.ops[i]) +
                                     ") failed: " + e.what(),
                                 i, "invalid-input");
        }
    }
    return out;
}

namespace {

void reject_unknown_op_fields(const json& obj, const std::vector<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ParseError("unknown field \"" + it.key() + "\" in " + obj.value("op", "op"));
}

std::string need(const json& obj, const std::string& key) {
    if (!obj.contains(key) || !obj.at(key).is_string())
        throw ParseError(obj.value("op", "op") + " requires string field \"" + key + "\"");
    return obj.at(key).get<std::string>();
}

} // namespace

RefinementPlan parse_plan(const std::string& text) {
    RefinementPlan plan;
    if (trimmed_lower(text) == "no changes") return plan;

    const std::string payload = extract_json_object(text);
    if (payload.empty()) throw ParseError("reply contains no plan object");
    json doc;
    try {
        doc = json::parse(strip_trailing_commas(payload));
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("plan parse error: ") + e.what());
    }
    if (doc.is_string() && trimmed_lower(doc.get<std::string>()) == "no changes") return plan;
    if (!doc.is_object() || !doc.contains("ops") || !doc.at("ops").is_array())
        throw ParseError("plan must be an object with an \"ops\" array");
    plan.rationale = doc.value("rationale", "");
    for (auto it = doc.begin(); it != doc.end(); ++it)
        if (it.key() != "ops" && it.key() != "rationale")
            throw ParseError("unknown plan field \"" + it.key() + "\"");

    for (const auto& item : doc.at("ops")) {
        if (!item.is_object() || !item.contains("op"))
            throw ParseError("each op must be an object with an \"op\" field");
        const std::string kind = item.at("op").get<std::string>();
        if (kind == "AddNode") {
            reject_unknown_op_fields(item, {"op", "node_id", "task_type", "content"});
            FlowNode node;
            node.id = need(item, "node_id");
            node.task_type = task_type_from_string(need(item, "task_type"));
            node.description = need(item, "content");
            plan.ops.push_back(AddNodeOp{std::move(node)});
        } else if (kind == "DelNode") {
            reject_unknown_op_fields(item, {"op", "node_id"});
            plan.ops.push_back(DelNodeOp{need(item, "node_id")});
        } else if (kind == "ModNode") {
            reject_unknown_op_fields(item, {"op", "node_id", "content", "task_type"});
            ModNodeOp op;
            op.id = need(item, "node_id");
            if (item.contains("content")) op.new_description = need(item, "content");
            if (item.contains("task_type"))
                op.new_task_type = task_type_from_string(need(item, "task_type"));
            if (!op.new_description && !op.new_task_type)
                throw ParseError("ModNode needs \"content\" or \"task_type\"");
            plan.ops.push_back(std::move(op));
        } else if (kind == "AddEdge") {
            reject_unknown_op_fields(item, {"op", "from", "to", "relationship"});
            plan.ops.push_back(AddEdgeOp{need(item, "from"), need(item, "to"),
                                         need(item, "relationship")});
        } else if (kind == "DelEdge") {
            reject_unknown_op_fields(item, {"op", "from", "to"});
            plan.ops.push_back(DelEdgeOp{need(item, "from"), need(item, "to")});
        } else if (kind == "ModEdge") {
            reject_unknown_op_fields(item, {"op", "from", "to", "relationship", "new_from", "new_to"});
            ModEdgeOp op;
            op.from = need(item, "from");
            op.to = need(item, "to");
            if (item.contains("relationship")) op.new_relation = need(item, "relationship");
            if (item.contains("new_from")) op.new_from = need(item, "new_from");
            if (item.contains("new_to")) op.new_to = need(item, "new_to");
            if (!op.new_relation && !op.new_from && !op.new_to)
                throw ParseError("ModEdge needs \"relationship\", \"new_from\", or \"new_to\"");
            plan.ops.push_back(std::move(op));
        } else {
            throw ParseError("unknown op \"" + kind + "\"");
        }
    }
    return plan;
}

ordered_json plan_to_json(const RefinementPlan& plan) {
    ordered_json doc;
    doc["ops"] = ordered_json::array();
    for (const auto& op : plan.ops) {
        ordered_json item;
        item["op"] = op_kind(op);
        if (const auto* add = std::get_if<AddNodeOp>(&op)) {
            item["node_id"] = add->node.id;
            item["task_type"] = to_string(add->node.task_type);
            item["content"] = add->node.description;
        } else if (const auto* del = std::get_if<DelNodeOp>(&op)) {
            item["node_id"] = del->id;
        } else if (const auto* mod = std::get_if<ModNodeOp>(&op)) {
            item["node_id"] = mod->id;
            if (mod->new_description) item["content"] = *mod->new_description;
            if (mod->new_task_type) item["task_type"] = to_string(*mod->new_task_type);
        } else if (const auto* add_e = std::get_if<AddEdgeOp>(&op)) {
            item["from"] = add_e->from;
            item["to"] = add_e->to;
            item["relationship"] = add_e->relation;
        } else if (const auto* del_e = std::get_if<DelEdgeOp>(&op)) {
            item["from"] = del_e->from;
            item["to"] = del_e->to;
        } else if (const auto* mod_e = std::get_if<ModEdgeOp>(&op)) {
            item["from"] = mod_e->from;
            item["to"] = mod_e->to;
            if (mod_e->new_relation) item["relationship"] = *mod_e->new_relation;
            if (mod_e->new_from) item["new_from"] = *mod_e->new_from;
            if (mod_e->new_to) item["new_to"] = *mod_e->new_to;
        }
        doc["ops"].push_back(std::move(item));
    }
    doc["rationale"] = plan.rationale;
    return doc;
}

RefineResult refine(const FlowGraph& graph, Backend& backend, const RefineConfig& config) {
    require_valid(graph);

    const std::string& instructions =
        config.instructions.empty() ? kRefinerInstructions : config.instructions;
    std::vector<Message> messages{{Role::system, instructions},
                                  {Role::user, "Current flow:\n" + serialize_graph(graph)}};

    RefineResult result;
    result.graph = graph;

    for (int attempt = 0; attempt <= config.repair_attempts; ++attempt) {
        BackendExchange exchange = backend.complete(messages);
        result.exchanges.push_back(exchange);
        std::string reason;
        try {
            RefinementPlan plan = parse_plan(exchange.response);
            result.graph = apply_plan(graph, plan);
            result.plan = std::move(plan);
            return result;
        } catch (const ParseError& e) {
            reason = e.what();
        } catch (const PlanApplyError& e) {
            reason = e.what();
        }
        if (attempt < config.repair_attempts) {
            result.repair_prompts++;
            messages.push_back({Role::assistant, exchange.response});
            messages.push_back({Role::user, "That plan was rejected: " + reason +
                                                ". Reply with a corrected {\"ops\": [...]} plan "
                                                "or \"no changes\"."});
        }
    }

    // Repair budget exhausted: degrade to the empty plan, keep the run alive.
    result.graph = graph;
    result.plan = RefinementPlan{};
    result.degraded = true;
    return result;
}

} // namespace knowflow
