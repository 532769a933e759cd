#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "knowflow/backend.hpp"
#include "knowflow/collector.hpp"
#include "knowflow/planner.hpp"
#include "knowflow/refiner.hpp"
#include "knowflow/summarizer.hpp"

namespace knowflow {

struct OutputPaths {
    std::string trace;         // append-only event log, one JSON object per line
    std::string snapshots_dir; // per-round graph snapshots + checkpoints
    std::string report;        // report-mode conclusion document
};

struct RunConfig {
    std::string query;
    SummaryMode mode = SummaryMode::qa;
    PlannerMode planner_mode = PlannerMode::flow;
    bool refinement_enabled = true;
    int max_rounds = 12;
    BackendDescriptor backend;
    std::map<std::string, std::string> tool_overrides; // name -> "mock"|"disabled"|"http_stub:URL"
    OutputPaths outputs;
    ExecutorConfig executor;
    PlannerConfig planner;
    RefineConfig refiner;
};

/// Stable id derived from the run-defining config fields, so identical
/// scripted runs produce identical traces.
std::string run_id_for(const RunConfig& config);

nlohmann::ordered_json config_echo(const RunConfig& config);

enum class RunStatus { success = 0, degraded = 2, aborted = 3 };

struct RoundRecord {
    int round = 0;
    std::vector<std::string> frontier; // executable set of this round
    bool blocked = false;              // round spent on a blocked-frontier refinement
    std::vector<ExecutionRecord> records;
    RefinementPlan refinement;
    bool refined = false;
    bool refine_degraded = false;
    std::vector<BackendExchange> refine_exchanges;
    FlowGraph snapshot;       // graph at end of round
    std::string snapshot_ref; // snapshot file basename when persisted
};

struct RunTrace {
    std::string run_id;
    nlohmann::ordered_json config;
    std::vector<ExpansionStep> steps;
    FlowGraph planned_graph; // round-0 snapshot
    std::vector<RoundRecord> rounds;
    std::vector<BackendExchange> plan_exchanges; // sequential-mode planning calls
    std::optional<Conclusion> conclusion;
    std::optional<BackendExchange> conclude_exchange;
    RunStatus status = RunStatus::aborted;
    std::string degraded_reason;
    std::string abort_reason;
    FlowGraph final_graph;
    std::chrono::milliseconds total_elapsed{0};
};

enum class Phase { pre_collect, pre_refine, pre_conclude };

Phase phase_from_string(const std::string& token);
std::string to_string(Phase phase);

struct Checkpoint {
    std::string run_id;
    std::string query;
    int round = 0;
    Phase phase = Phase::pre_collect;
    FlowGraph graph;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);

/// Loads and validates a checkpoint; a graph that fails validate() is a
/// CheckpointError.
Checkpoint load_checkpoint(const std::string& path);

/// Full run: plan, then iterate collect/refine until only the query node is
/// left (or the run is blocked or out of budget), then conclude.
RunTrace run(const RunConfig& config);

/// Continues a checkpointed run; with scripted backends the resumed trace is
/// byte-identical to the uninterrupted run's trace from that point on.
/// Refuses configs whose query differs from the checkpoint's.
RunTrace resume(const Checkpoint& checkpoint, const RunConfig& config);

/// One single-turn record per expansion step, in the planner-dialogue shape:
/// {"messages": [{"role": "user", ...}, {"role": "assistant", ...}]}.
std::vector<nlohmann::ordered_json> export_planner_dialogue(const RunTrace& trace,
                                                            const PlannerConfig& config = {});

/// DOT text of the round's snapshot (round 0 = post-planning graph).
std::string export_dot(const RunTrace& trace, int round);

/// Rebuilds a replayable scenario from every exchange and tool call in the
/// trace (fingerprint-keyed entries; first response wins on duplicates).
ScriptedScenario scenario_from_trace(const RunTrace& trace);

nlohmann::ordered_json exchange_to_json(const BackendExchange& exchange);
nlohmann::ordered_json record_to_json(const ExecutionRecord& record);

} // namespace knowflow
