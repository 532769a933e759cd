#include "knowflow/collector.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace knowflow {

using nlohmann::json;

namespace {

const char* kExecutorPreamble =
    "You are a subtask executor inside a research flow. Work strictly from the subtask, "
    "the upstream knowledge, and tool results. Respond with exactly one JSON object per "
    "turn:\n"
    "  {\"action\": \"tool_call\", \"tool\": \"<name>\", \"arguments\": {...}}\n"
    "  {\"action\": \"final\", \"status\": \"success\", \"content\": \"<what you established>\"}\n"
    "  {\"action\": \"final\", \"status\": \"failure\", \"content\": \"<why the subtask cannot be completed>\"}";

const char* kDistillInstructions =
    "Condense the execution trajectory below into a compact knowledge context that "
    "downstream subtasks can rely on. Keep every load-bearing fact, identifier, and "
    "number. Reply with only the distilled summary.";

std::string executor_system_prompt(const ToolRegistry& tools, const ExecutorConfig& config) {
    std::string text = config.instructions.empty() ? kExecutorPreamble : config.instructions;
    text += "\nAvailable tools:";
    bool any = false;
    for (const auto& name : tools.names()) {
        std::string purpose;
        for (const auto& [builtin, builtin_purpose] : ToolRegistry::builtin_tools())
            if (builtin == name) purpose = builtin_purpose;
        text += "\n- " + name + (purpose.empty() ? "" : ": " + purpose);
        if (tools.kind(name) == ToolRegistry::Kind::disabled) text += " (unavailable)";
        any = true;
    }
    if (!any) text += "\n(none)";
    return text;
}

std::string executor_user_prompt(const FlowNode& node,
                                 const std::vector<std::pair<std::string, std::string>>& upstream) {
    std::ostringstream out;
    out << "Task type: " << to_string(node.task_type) << "\n";
    out << "Subtask " << node.id << ": " << node.description << "\n";
    out << "Upstream knowledge:";
    if (upstream.empty()) {
        out << "\n(none)";
    } else {
        for (const auto& [id, context] : upstream) out << "\n[" << id << "] " << context;
    }
    return out.str();
}

struct Action {
    enum class Kind { tool_call, final_success, final_failure };
    Kind kind;
    std::string tool;
    std::string arguments;
    std::string content;
};

/// A reply without an embedded {"action": ...} object counts as a successful
/// final answer carrying the raw text.
Action parse_action(const std::string& response) {
    Action action{Action::Kind::final_success, "", "", response};
    const std::string payload = extract_json_object(response);
    if (payload.empty()) return action;
    json doc;
    try {
        doc = json::parse(strip_trailing_commas(payload));
    } catch (const json::parse_error&) {
        return action;
    }
    if (!doc.is_object() || !doc.contains("action")) return action;

    const std::string kind = doc.value("action", "");
    if (kind == "tool_call") {
        action.kind = Action::Kind::tool_call;
        action.tool = doc.value("tool", "");
        if (doc.contains("arguments"))
            action.arguments = doc.at("arguments").is_string()
                                   ? doc.at("arguments").get<std::string>()
                                   : doc.at("arguments").dump();
    } else if (kind == "final") {
        action.kind = doc.value("status", "success") == "failure" ? Action::Kind::final_failure
                                                                  : Action::Kind::final_success;
        action.content = doc.value("content", "");
    }
    return action;
}

BackendExchange complete_with_retries(Backend& backend, const std::vector<Message>& messages,
                                      int retries) {
    for (int attempt = 0;; ++attempt) {
        try {
            return backend.complete(messages);
        } catch (const BackendError&) {
            if (attempt >= retries) throw;
        }
    }
}

} // namespace

std::string distill_context(const std::vector<BackendExchange>& exchanges,
                            const std::vector<ToolCallRecord>& tool_calls, Backend& backend,
                            std::size_t context_limit, BackendExchange* out_exchange) {
    if (exchanges.empty() && tool_calls.empty())
        throw InvalidInputError("distill_context requires a non-empty trajectory");

    std::ostringstream rendered;
    for (std::size_t i = 0; i < exchanges.size(); ++i) {
        rendered << "assistant: " << exchanges[i].response << "\n";
        if (i < tool_calls.size()) {
            const auto& call = tool_calls[i];
            rendered << "tool " << call.tool_name << "(" << call.arguments << ") -> "
                     << (call.ok ? "ok" : "error") << ": " << call.result << "\n";
        }
    }

    std::vector<Message> messages{{Role::system, kDistillInstructions},
                                  {Role::user, rendered.str()}};
    BackendExchange exchange = backend.complete(messages);
    if (out_exchange) *out_exchange = exchange;

    std::string context = exchange.response;
    if (context.size() > context_limit) context.resize(context_limit);
    return context;
}

ExecutionRecord execute_node(const FlowNode& node,
                             const std::vector<std::pair<std::string, std::string>>& upstream_contexts,
                             Backend& backend, const ToolRegistry& tools,
                             const ExecutorConfig& config) {
    if (node.state != NodeState::pending)
        throw InvalidInputError("execute_node requires a pending node, got " +
                                to_string(node.state));

    const auto started = std::chrono::steady_clock::now();
    ExecutionRecord record;
    record.node_id = node.id;

    auto elapsed = [&started] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started);
    };
    auto fail = [&](std::string diagnostic) {
        record.outcome_state = NodeState::failure;
        record.context.reset();
        record.diagnostic = std::move(diagnostic);
        record.elapsed = elapsed();
        return record;
    };

    ToolRegistry::Instance instance = tools.instantiate();
    std::vector<Message> messages{{Role::system, executor_system_prompt(tools, config)},
                                  {Role::user, executor_user_prompt(node, upstream_contexts)}};

    while (true) {
        if (elapsed() > config.per_node_timeout)
            return fail("timeout after " + std::to_string(elapsed().count()) + " ms");

        BackendExchange exchange;
        try {
            exchange = complete_with_retries(backend, messages, config.retries);
        } catch (const BackendError& e) {
            record.elapsed = elapsed();
            return fail(std::string("backend failure: ") + e.what());
        }
        record.exchanges.push_back(exchange);
        if (elapsed() > config.per_node_timeout)
            return fail("timeout after " + std::to_string(elapsed().count()) + " ms");

        Action action = parse_action(exchange.response);
        if (action.kind == Action::Kind::final_failure)
            return fail(action.content.empty() ? "executor reported failure" : action.content);

        if (action.kind == Action::Kind::final_success) {
            BackendExchange distill_exchange;
            std::string context;
            try {
                context = distill_context(record.exchanges, record.tool_calls, backend,
                                          config.context_limit, &distill_exchange);
            } catch (const BackendError& e) {
                return fail(std::string("distillation failed: ") + e.what());
            }
            record.exchanges.push_back(distill_exchange);
            if (context.empty()) return fail("distillation produced an empty context");
            record.outcome_state = NodeState::success;
            record.context = std::move(context);
            record.elapsed = elapsed();
            return record;
        }

        // Tool call.
        if (static_cast<int>(record.tool_calls.size()) >= config.max_tool_calls)
            return fail("tool-call budget exceeded (" + std::to_string(config.max_tool_calls) +
                        ")");
        messages.push_back({Role::assistant, exchange.response});
        try {
            ToolCallRecord call = instance.invoke(action.tool, action.arguments);
            record.tool_calls.push_back(call);
            json result{{"tool", call.tool_name}, {"ok", call.ok}, {"result", call.result}};
            messages.push_back({Role::tool, result.dump()});
        } catch (const UnknownToolError& e) {
            // Not a registry call: feed the mistake back without a record.
            json result{{"tool", action.tool}, {"ok", false}, {"result", e.what()}};
            messages.push_back({Role::tool, result.dump()});
        }
    }
}

CollectResult collect_round(const FlowGraph& graph, Backend& backend, const ToolRegistry& tools,
                            const ExecutorConfig& config) {
    std::vector<std::string> ready = frontier(graph);
    std::vector<std::string> executable;
    for (const auto& id : ready)
        if (id != graph.query_node_id) executable.push_back(id);
    if (executable.empty())
        throw NoProgressError(std::string("no executable frontier: ") +
                              (ready.empty() ? "every pending node is blocked"
                                             : "only the query node remains"));

    // Upstream contexts per node, computed against the read-only input graph.
    std::vector<std::vector<std::pair<std::string, std::string>>> upstream(executable.size());
    for (std::size_t i = 0; i < executable.size(); ++i) {
        for (const auto& pred : graph.predecessors(executable[i])) {
            const FlowNode* p = graph.find_node(pred);
            if (p->state == NodeState::success) upstream[i].push_back({pred, *p->context});
        }
    }

    std::vector<ExecutionRecord> records(executable.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= executable.size()) return;
            const FlowNode* node = graph.find_node(executable[i]);
            records[i] = execute_node(*node, upstream[i], backend, tools, config);
        }
    };

    const std::size_t thread_count =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(config.max_parallel, 1)),
                              executable.size());
    if (thread_count <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(thread_count);
        for (std::size_t t = 0; t < thread_count; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    CollectResult result;
    result.graph = graph;
    for (std::size_t i = 0; i < executable.size(); ++i) {
        FlowNode* node = result.graph.find_node(executable[i]);
        node->state = records[i].outcome_state;
        node->context = records[i].context;
    }
    require_valid(result.graph);

    result.records = std::move(records);
    std::sort(result.records.begin(), result.records.end(),
              [](const ExecutionRecord& a, const ExecutionRecord& b) {
                  return a.node_id < b.node_id;
              });
    return result;
}

} // namespace knowflow
