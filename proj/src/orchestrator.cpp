#include "knowflow/orchestrator.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace knowflow {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

namespace fs = std::filesystem;

class TraceWriter {
public:
    explicit TraceWriter(const std::string& path) {
        if (path.empty()) return;
        if (auto parent = fs::path(path).parent_path(); !parent.empty())
            fs::create_directories(parent);
        out_.open(path, std::ios::trunc);
        if (!out_) throw Error("cannot open trace file " + path);
    }

    void event(const ordered_json& e) {
        if (!out_.is_open()) return;
        out_ << e.dump() << "\n";
        out_.flush(); // one event per line so a crash loses at most one
    }

private:
    std::ofstream out_;
};

std::string snapshot_basename(int round) {
    return "snapshot_round_" + std::to_string(round) + ".json";
}

std::string checkpoint_basename(int round, Phase phase) {
    return "checkpoint_round_" + std::to_string(round) + "_" + to_string(phase) + ".json";
}

void write_text_file(const std::string& path, const std::string& content) {
    if (auto parent = fs::path(path).parent_path(); !parent.empty())
        fs::create_directories(parent);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out << content;
    if (content.empty() || content.back() != '\n') out << "\n";
}

ordered_json exchanges_to_json(const std::vector<BackendExchange>& exchanges) {
    ordered_json arr = ordered_json::array();
    for (const auto& e : exchanges) arr.push_back(exchange_to_json(e));
    return arr;
}

struct Engine {
    const RunConfig& config;
    Backend& backend;
    const ToolRegistry& tools;
    TraceWriter& writer;
    RunTrace& trace;
    FlowGraph graph;
    int round = 1;

    void snapshot(int round_no, RoundRecord& record) {
        record.snapshot = graph;
        record.snapshot_ref = snapshot_basename(round_no);
        persist_graph(record.snapshot_ref);
        writer.event({{"event", "snapshot"}, {"round", round_no}, {"ref", record.snapshot_ref}});
    }

    void persist_graph(const std::string& basename) {
        if (config.outputs.snapshots_dir.empty()) return;
        fs::create_directories(config.outputs.snapshots_dir);
        write_text_file(config.outputs.snapshots_dir + "/" + basename, serialize_graph(graph));
    }

    void checkpoint(Phase phase) {
        if (config.outputs.snapshots_dir.empty()) return;
        Checkpoint cp{trace.run_id, config.query, round, phase, graph};
        save_checkpoint(cp, config.outputs.snapshots_dir + "/" + checkpoint_basename(round, phase));
    }

    std::vector<std::string> executable_frontier(const std::vector<std::string>& ready) const {
        std::vector<std::string> out;
        for (const auto& id : ready)
            if (id != graph.query_node_id) out.push_back(id);
        return out;
    }

    void do_refine(RoundRecord& record) {
        RefineResult refined = refine(graph, backend, config.refiner);
        graph = refined.graph;
        record.refinement = refined.plan;
        record.refined = true;
        record.refine_degraded = refined.degraded;
        record.refine_exchanges = refined.exchanges;
        writer.event({{"event", "refine_done"},
                      {"round", record.round},
                      {"plan", plan_to_json(refined.plan)},
                      {"degraded", refined.degraded},
                      {"repair_prompts", refined.repair_prompts},
                      {"exchanges", exchanges_to_json(refined.exchanges)}});
    }

    void do_collect(RoundRecord& record) {
        CollectResult result = collect_round(graph, backend, tools, config.executor);
        graph = result.graph;
        for (const auto& rec : result.records)
            writer.event({{"event", "node_executed"},
                          {"round", record.round},
                          {"record", record_to_json(rec)}});
        record.records = result.records;
    }

    /// Rounds loop + conclusion. resume_phase selects the entry point when
    /// continuing from a checkpoint.
    void rounds_and_conclude(std::optional<Phase> resume_phase) {
        bool go_conclude = false;

        if (resume_phase == Phase::pre_conclude) {
            go_conclude = true;
        } else if (resume_phase == Phase::pre_refine) {
            std::vector<std::string> ready = frontier(graph);
            RoundRecord record;
            record.round = round;
            if (ready.empty()) {
                // Blocked-frontier refinement round was checkpointed.
                record.blocked = true;
                writer.event({{"event", "round_start"},
                              {"round", round},
                              {"frontier", ordered_json::array()},
                              {"blocked", true}});
                FlowGraph before = graph;
                do_refine(record);
                if (structurally_equal(before, graph)) {
                    trace.degraded_reason = "blocked-frontier";
                    go_conclude = true;
                }
            } else {
                do_refine(record);
            }
            if (!go_conclude) {
                snapshot(round, record);
                trace.rounds.push_back(std::move(record));
                ++round;
            } else {
                trace.rounds.push_back(std::move(record));
            }
        }

        while (!go_conclude) {
            std::vector<std::string> ready = frontier(graph);
            std::vector<std::string> executable = executable_frontier(ready);

            if (!ready.empty() && executable.empty()) break; // only the query node remains

            if (round > config.max_rounds) {
                trace.degraded_reason = "budget-exhausted";
                break;
            }

            if (ready.empty()) {
                // Every pending node (possibly the query itself) sits behind a
                // failure; refinement is the only way forward.
                if (!config.refinement_enabled) {
                    trace.degraded_reason = "blocked-frontier";
                    break;
                }
                checkpoint(Phase::pre_refine);
                RoundRecord record;
                record.round = round;
                record.blocked = true;
                writer.event({{"event", "round_start"},
                              {"round", round},
                              {"frontier", ordered_json::array()},
                              {"blocked", true}});
                FlowGraph before = graph;
                do_refine(record);
                const bool stalled = structurally_equal(before, graph);
                if (stalled) {
                    trace.degraded_reason = "blocked-frontier";
                    trace.rounds.push_back(std::move(record));
                    break;
                }
                snapshot(round, record);
                trace.rounds.push_back(std::move(record));
                ++round;
                continue;
            }

            checkpoint(Phase::pre_collect);
            RoundRecord record;
            record.round = round;
            record.frontier = executable;
            writer.event({{"event", "round_start"},
                          {"round", round},
                          {"frontier", executable},
                          {"blocked", false}});
            do_collect(record);
            if (config.refinement_enabled) {
                checkpoint(Phase::pre_refine);
                do_refine(record);
            }
            snapshot(round, record);
            trace.rounds.push_back(std::move(record));
            ++round;
        }

        conclude_run();
    }

    void conclude_run() {
        checkpoint(Phase::pre_conclude);
        const bool degraded = !trace.degraded_reason.empty();
        try {
            ConcludeResult result = conclude(graph, config.mode, backend);
            graph = result.graph;
            trace.conclusion = result.conclusion;
            trace.conclude_exchange = result.exchange;
            writer.event({{"event", "conclude"},
                          {"mode", to_string(config.mode)},
                          {"answer", result.conclusion.answer},
                          {"sources", result.conclusion.sources},
                          {"degraded", degraded},
                          {"degraded_reason", trace.degraded_reason},
                          {"exchange", exchange_to_json(result.exchange)}});
            if (config.mode == SummaryMode::report && !config.outputs.report.empty())
                write_text_file(config.outputs.report, result.conclusion.answer);
            trace.status = degraded ? RunStatus::degraded : RunStatus::success;
        } catch (const ConcludeError& e) {
            graph = e.graph();
            trace.abort_reason = e.what();
            writer.event({{"event", "conclude_failed"}, {"error", e.what()}});
            trace.status = RunStatus::aborted;
        } catch (const AlreadyConcludedError& e) {
            trace.abort_reason = e.what();
            writer.event({{"event", "conclude_failed"}, {"error", e.what()}});
            trace.status = RunStatus::aborted;
        }
        trace.final_graph = graph;
        writer.event({{"event", "run_end"}, {"status", static_cast<int>(trace.status)}});
    }
};

ToolRegistry build_tools(const RunConfig& config, const ScriptedScenario* scenario) {
    ToolRegistry tools = scenario ? ToolRegistry::from_scenario(*scenario) : ToolRegistry();
    for (const auto& [name, setting] : config.tool_overrides) {
        if (setting == "disabled") {
            tools.set_disabled(name);
        } else if (setting == "mock") {
            tools.set_handler(name, [](const std::string& args, int) {
                return std::make_pair("mock tool has no scripted result for " + args, false);
            });
        } else if (setting.rfind("http_stub:", 0) == 0) {
            tools.set_http_stub(name, setting.substr(10));
        } else {
            throw InvalidInputError("unknown tool override \"" + setting + "\" for " + name);
        }
    }
    return tools;
}

void check_config(const RunConfig& config) {
    if (config.query.empty()) throw InvalidInputError("query must be non-empty");
    if (config.max_rounds < 1) throw InvalidInputError("max_rounds must be at least 1");
    if (config.executor.max_parallel < 1 || config.executor.max_tool_calls < 1)
        throw InvalidInputError("executor bounds must be at least 1");
    if (config.planner.max_iterations < 1)
        throw InvalidInputError("max_iterations must be at least 1");
}

} // namespace

std::string to_string(Phase phase) {
    switch (phase) {
        case Phase::pre_collect: return "pre-collect";
        case Phase::pre_refine: return "pre-refine";
        case Phase::pre_conclude: return "pre-conclude";
    }
    return "pre-collect";
}

Phase phase_from_string(const std::string& token) {
    if (token == "pre-collect") return Phase::pre_collect;
    if (token == "pre-refine") return Phase::pre_refine;
    if (token == "pre-conclude") return Phase::pre_conclude;
    throw ParseError("unknown checkpoint phase \"" + token + "\"");
}

ordered_json config_echo(const RunConfig& config) {
    ordered_json echo;
    echo["query"] = config.query;
    echo["mode"] = to_string(config.mode);
    echo["planner_mode"] = to_string(config.planner_mode);
    echo["refinement_enabled"] = config.refinement_enabled;
    echo["max_rounds"] = config.max_rounds;
    echo["backend"] = config.backend.kind == BackendDescriptor::Kind::scripted
                          ? "scripted:" + config.backend.scenario_path
                          : "remote";
    echo["planner"] = {{"max_iterations", config.planner.max_iterations},
                       {"repair_attempts", config.planner.repair_attempts}};
    echo["executor"] = {{"max_parallel", config.executor.max_parallel},
                        {"per_node_timeout_ms", config.executor.per_node_timeout.count()},
                        {"max_tool_calls", config.executor.max_tool_calls},
                        {"retries", config.executor.retries},
                        {"context_limit", config.executor.context_limit}};
    ordered_json overrides = ordered_json::object();
    for (const auto& [name, setting] : config.tool_overrides) overrides[name] = setting;
    echo["tool_overrides"] = overrides;
    return echo;
}

std::string run_id_for(const RunConfig& config) {
    // Output paths deliberately excluded: two runs of the same scripted job
    // must share an id for their traces to compare byte-for-byte.
    return fingerprint({{Role::system, "knowflow-run"}, {Role::user, config_echo(config).dump()}})
        .substr(0, 16);
}

ordered_json exchange_to_json(const BackendExchange& exchange) {
    ordered_json messages = ordered_json::array();
    for (const auto& m : exchange.request)
        messages.push_back(ordered_json{{"role", to_string(m.role)}, {"content", m.content}});
    // latency intentionally omitted: trace bytes must be replay-stable
    return ordered_json{{"fingerprint", exchange.fingerprint},
                        {"messages", messages},
                        {"response", exchange.response}};
}

ordered_json record_to_json(const ExecutionRecord& record) {
    ordered_json calls = ordered_json::array();
    for (const auto& c : record.tool_calls)
        calls.push_back(ordered_json{{"tool_name", c.tool_name},
                                     {"arguments", c.arguments},
                                     {"result", c.result},
                                     {"ok", c.ok}});
    ordered_json out{{"node_id", record.node_id},
                     {"outcome", to_string(record.outcome_state)},
                     {"context", record.context ? ordered_json(*record.context) : ordered_json()},
                     {"diagnostic", record.diagnostic},
                     {"exchanges", exchanges_to_json(record.exchanges)},
                     {"tool_calls", calls}};
    return out;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
    ordered_json doc;
    doc["run_id"] = checkpoint.run_id;
    doc["query"] = checkpoint.query;
    doc["round"] = checkpoint.round;
    doc["phase"] = to_string(checkpoint.phase);
    doc["graph"] = graph_to_json(checkpoint.graph);
    write_text_file(path, doc.dump(1));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CheckpointError("cannot open checkpoint " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    json doc;
    try {
        doc = json::parse(buf.str());
    } catch (const json::parse_error& e) {
        throw CheckpointError("corrupt checkpoint " + path + ": " + e.what());
    }
    Checkpoint cp;
    try {
        cp.run_id = doc.at("run_id").get<std::string>();
        cp.query = doc.at("query").get<std::string>();
        cp.round = doc.at("round").get<int>();
        cp.phase = phase_from_string(doc.at("phase").get<std::string>());
        cp.graph = graph_from_json(doc.at("graph"));
    } catch (const json::exception& e) {
        throw CheckpointError("corrupt checkpoint " + path + ": " + e.what());
    } catch (const ParseError& e) {
        throw CheckpointError("corrupt checkpoint " + path + ": " + e.what());
    } catch (const StructuralError& e) {
        throw CheckpointError("checkpoint graph invalid: " + std::string(e.what()));
    }
    return cp;
}

RunTrace run(const RunConfig& config) {
    check_config(config);
    const auto started = std::chrono::steady_clock::now();

    ScriptedScenario scenario;
    std::shared_ptr<Backend> backend;
    std::unique_ptr<ToolRegistry> tools;
    if (config.backend.kind == BackendDescriptor::Kind::scripted) {
        scenario = load_scenario(config.backend.scenario_path);
        backend = std::make_shared<ScriptedBackend>(scenario);
        tools = std::make_unique<ToolRegistry>(build_tools(config, &scenario));
    } else {
        backend = make_backend(config.backend);
        tools = std::make_unique<ToolRegistry>(build_tools(config, nullptr));
    }

    RunTrace trace;
    trace.run_id = run_id_for(config);
    trace.config = config_echo(config);
    TraceWriter writer(config.outputs.trace);
    writer.event({{"event", "run_start"}, {"run_id", trace.run_id}, {"config", trace.config}});

    Engine engine{config, *backend, *tools, writer, trace, FlowGraph{}, 1};
    try {
        if (config.planner_mode == PlannerMode::flow) {
            PlannerConfig planner_config = config.planner;
            planner_config.planner_mode = PlannerMode::flow;
            PlanResult planned = plan(config.query, *backend, planner_config);
            for (const auto& step : planned.steps) {
                ordered_json pairs = ordered_json::array();
                for (const auto& [from, to] : step.added_edge_pairs)
                    pairs.push_back(ordered_json::array({from, to}));
                writer.event({{"event", "plan_step"},
                              {"iteration", step.iteration},
                              {"changed", step.changed},
                              {"added_nodes", step.added_node_ids},
                              {"added_edges", pairs},
                              {"exchanges", exchanges_to_json(step.exchanges)}});
            }
            writer.event({{"event", "plan_done"},
                          {"nodes", planned.graph.nodes.size()},
                          {"edges", planned.graph.edges.size()},
                          {"fixpoint", planned.reached_fixpoint}});
            trace.steps = planned.steps;
            engine.graph = planned.graph;
        } else {
            PlannerConfig planner_config = config.planner;
            planner_config.planner_mode = PlannerMode::sequential;
            std::vector<BackendExchange> exchanges;
            engine.graph = plan_sequential(config.query, *backend, planner_config, &exchanges);
            trace.plan_exchanges = exchanges;
            writer.event({{"event", "plan_done"},
                          {"nodes", engine.graph.nodes.size()},
                          {"edges", engine.graph.edges.size()},
                          {"fixpoint", true},
                          {"exchanges", exchanges_to_json(exchanges)}});
        }
    } catch (const Error& e) {
        trace.status = RunStatus::aborted;
        trace.abort_reason = e.what();
        writer.event({{"event", "run_aborted"}, {"error", e.what()}});
        writer.event({{"event", "run_end"}, {"status", static_cast<int>(trace.status)}});
        trace.total_elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started);
        return trace;
    }

    trace.planned_graph = engine.graph;
    RoundRecord planning_snapshot;
    engine.snapshot(0, planning_snapshot); // round-0 snapshot is the planned graph

    engine.rounds_and_conclude(std::nullopt);
    trace.total_elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    return trace;
}

RunTrace resume(const Checkpoint& checkpoint, const RunConfig& config) {
    check_config(config);
    if (checkpoint.query != config.query)
        throw IncompatibleConfigError("checkpoint belongs to query \"" + checkpoint.query +
                                      "\", not \"" + config.query + "\"");
    require_valid(checkpoint.graph);
    const auto started = std::chrono::steady_clock::now();

    ScriptedScenario scenario;
    std::shared_ptr<Backend> backend;
    std::unique_ptr<ToolRegistry> tools;
    if (config.backend.kind == BackendDescriptor::Kind::scripted) {
        scenario = load_scenario(config.backend.scenario_path);
        backend = std::make_shared<ScriptedBackend>(scenario);
        tools = std::make_unique<ToolRegistry>(build_tools(config, &scenario));
    } else {
        backend = make_backend(config.backend);
        tools = std::make_unique<ToolRegistry>(build_tools(config, nullptr));
    }

    RunTrace trace;
    trace.run_id = checkpoint.run_id;
    trace.config = config_echo(config);
    TraceWriter writer(config.outputs.trace);

    Engine engine{config, *backend, *tools, writer, trace, checkpoint.graph, checkpoint.round};
    trace.planned_graph = checkpoint.graph;
    engine.rounds_and_conclude(checkpoint.phase);
    trace.total_elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    return trace;
}

std::vector<ordered_json> export_planner_dialogue(const RunTrace& trace,
                                                  const PlannerConfig& config) {
    if (trace.steps.empty())
        throw NothingToExportError("trace contains no expansion steps to export");
    std::vector<ordered_json> records;
    for (const auto& step : trace.steps) {
        ordered_json record;
        record["messages"] = ordered_json::array();
        record["messages"].push_back(ordered_json{
            {"role", "user"}, {"content", planner_request_text(step.before, config)}});
        record["messages"].push_back(
            ordered_json{{"role", "assistant"}, {"content", serialize_graph(step.after)}});
        records.push_back(std::move(record));
    }
    return records;
}

std::string export_dot(const RunTrace& trace, int round) {
    if (round == 0) return to_dot(trace.planned_graph);
    for (const auto& record : trace.rounds)
        if (record.round == round) return to_dot(record.snapshot);
    throw RangeError("trace has no round " + std::to_string(round));
}

ScriptedScenario scenario_from_trace(const RunTrace& trace) {
    ScriptedScenario scenario;
    scenario.strict = true;
    std::vector<const BackendExchange*> exchanges;
    for (const auto& step : trace.steps)
        for (const auto& e : step.exchanges) exchanges.push_back(&e);
    for (const auto& e : trace.plan_exchanges) exchanges.push_back(&e);
    for (const auto& record : trace.rounds) {
        for (const auto& rec : record.records)
            for (const auto& e : rec.exchanges) exchanges.push_back(&e);
        for (const auto& e : record.refine_exchanges) exchanges.push_back(&e);
    }
    if (trace.conclude_exchange) exchanges.push_back(&*trace.conclude_exchange);

    std::vector<std::string> seen;
    for (const auto* e : exchanges) {
        if (std::find(seen.begin(), seen.end(), e->fingerprint) != seen.end()) continue;
        seen.push_back(e->fingerprint);
        ScenarioEntry entry;
        entry.match = ScenarioEntry::Match::fingerprint;
        entry.key = e->fingerprint;
        entry.response = e->response;
        scenario.entries.push_back(std::move(entry));
    }

    std::vector<std::pair<std::string, std::string>> seen_tools;
    for (const auto& record : trace.rounds)
        for (const auto& rec : record.records)
            for (const auto& call : rec.tool_calls) {
                std::pair<std::string, std::string> key{call.tool_name, call.arguments};
                if (std::find(seen_tools.begin(), seen_tools.end(), key) != seen_tools.end())
                    continue;
                seen_tools.push_back(key);
                scenario.tools.push_back({call.tool_name, call.arguments, call.result, call.ok});
            }
    return scenario;
}

} // namespace knowflow
