#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "knowflow/backend.hpp"
#include "knowflow/graph.hpp"
#include "knowflow/tools.hpp"

namespace knowflow {

struct ExecutorConfig {
    int max_parallel = 8;
    std::chrono::milliseconds per_node_timeout{120000};
    int max_tool_calls = 25;
    int retries = 2;                // transport-level re-attempts per backend call
    std::size_t context_limit = 2000; // distilled-context length bound (characters)
    std::string instructions;       // empty: built-in executor prompt
};

/// Per-node trajectory: every backend exchange and tool call plus the outcome.
struct ExecutionRecord {
    std::string node_id;
    NodeState outcome_state = NodeState::failure; // success | failure
    std::optional<std::string> context;           // present iff success
    std::vector<BackendExchange> exchanges;
    std::vector<ToolCallRecord> tool_calls;
    std::chrono::milliseconds elapsed{0};
    std::string diagnostic; // failure reason, empty on success
};

/// Condenses a successful trajectory into a knowledge context with one extra
/// backend exchange, truncated to context_limit characters. The distillation
/// exchange is appended to `exchanges` by the caller-facing execute_node.
std::string distill_context(const std::vector<BackendExchange>& exchanges,
                            const std::vector<ToolCallRecord>& tool_calls, Backend& backend,
                            std::size_t context_limit = 2000,
                            BackendExchange* out_exchange = nullptr);

/// Runs one pending node to a terminal outcome: a tool-calling conversation
/// followed by distillation on success. Timeouts, transport failures after
/// retries, and tool-budget exhaustion are failure outcomes, not errors.
ExecutionRecord execute_node(const FlowNode& node,
                             const std::vector<std::pair<std::string, std::string>>& upstream_contexts,
                             Backend& backend, const ToolRegistry& tools,
                             const ExecutorConfig& config);

struct CollectResult {
    FlowGraph graph;
    std::vector<ExecutionRecord> records; // ordered by node_id
};

/// Executes every non-query frontier node concurrently (bounded by
/// max_parallel, each with its own tool-registry instance) and merges the
/// outcomes into a new graph; only executed nodes' state/context change.
/// Raises NoProgressError when nothing but the query node is executable.
CollectResult collect_round(const FlowGraph& graph, Backend& backend, const ToolRegistry& tools,
                            const ExecutorConfig& config);

} // namespace knowflow
