#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "knowflow/orchestrator.hpp"

using namespace knowflow;

namespace {

BackendDescriptor parse_backend_flag(const std::string& value) {
    if (value.rfind("scripted:", 0) == 0) return scripted_descriptor(value.substr(9));
    if (value == "remote") return remote_descriptor_from_env();
    throw CLI::ValidationError("--backend", "expected scripted:PATH or remote");
}

void write_lines(const std::string& path, const std::vector<nlohmann::ordered_json>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    for (const auto& record : records) out << record.dump() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowflow - knowledge-flow orchestration engine"};

    std::string query;
    std::string mode = "qa";
    std::string planner = "flow";
    bool no_refine = false;
    int max_rounds = 12;
    std::string backend_flag;
    std::string trace_path;
    std::string snapshots_dir;
    int dot_round = -1;
    std::string dot_out;
    std::string report_out;
    std::string resume_path;
    std::string export_dialogue_path;
    std::string record_path;
    int max_parallel = 8;
    double timeout_seconds = 120.0;

    app.add_option("--query", query, "Research objective to run");
    app.add_option("--mode", mode, "Conclusion mode: qa|report")
        ->check(CLI::IsMember({"qa", "report"}));
    app.add_option("--planner", planner, "Planner: flow|sequential")
        ->check(CLI::IsMember({"flow", "sequential"}));
    app.add_flag("--no-refine", no_refine, "Disable the flow refiner");
    app.add_option("--max-rounds", max_rounds, "Collect-round budget")->check(CLI::PositiveNumber);
    app.add_option("--backend", backend_flag, "Backend: scripted:PATH or remote")->required();
    app.add_option("--trace", trace_path, "Write the run trace (JSON lines) here");
    app.add_option("--snapshots", snapshots_dir, "Directory for graph snapshots and checkpoints");
    app.add_option("--dot-round", dot_round, "Emit DOT of this round's snapshot (0 = post-planning)");
    app.add_option("--dot-out", dot_out, "Destination for --dot-round (default stdout)");
    app.add_option("--report-out", report_out, "Write a report-mode conclusion document here");
    app.add_option("--resume", resume_path, "Resume from this checkpoint file");
    app.add_option("--export-dialogue", export_dialogue_path,
                   "Export planner dialogue records (JSON lines) here");
    app.add_option("--record", record_path, "Dump the run as a replayable scenario file");
    app.add_option("--max-parallel", max_parallel, "Concurrent node executions per round")
        ->check(CLI::PositiveNumber);
    app.add_option("--timeout", timeout_seconds, "Per-node timeout in seconds")
        ->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig config;
        config.mode = summary_mode_from_string(mode);
        config.planner_mode = planner_mode_from_string(planner);
        config.refinement_enabled = !no_refine;
        config.max_rounds = max_rounds;
        config.backend = parse_backend_flag(backend_flag);
        config.outputs.trace = trace_path;
        config.outputs.snapshots_dir = snapshots_dir;
        config.outputs.report = report_out;
        config.executor.max_parallel = max_parallel;
        config.executor.per_node_timeout =
            std::chrono::milliseconds(static_cast<long long>(timeout_seconds * 1000.0));
        config.planner.planner_mode = config.planner_mode;

        RunTrace trace;
        if (!resume_path.empty()) {
            Checkpoint checkpoint = load_checkpoint(resume_path);
            config.query = query.empty() ? checkpoint.query : query;
            trace = resume(checkpoint, config);
        } else {
            if (query.empty()) {
                std::cerr << "error: --query is required (or --resume)\n";
                return 3;
            }
            config.query = query;
            trace = run(config);
        }

        if (trace.conclusion) {
            std::cout << trace.conclusion->answer << "\n";
        } else {
            std::cerr << "run aborted: " << trace.abort_reason << "\n";
        }
        if (!trace.degraded_reason.empty())
            std::cerr << "degraded conclusion (" << trace.degraded_reason << ")\n";
        std::cerr << "rounds: " << trace.rounds.size() << ", elapsed: "
                  << trace.total_elapsed.count() << " ms\n";

        if (!export_dialogue_path.empty()) {
            PlannerConfig planner_config = config.planner;
            write_lines(export_dialogue_path, export_planner_dialogue(trace, planner_config));
            std::cerr << "dialogue records written to " << export_dialogue_path << "\n";
        }
        if (dot_round >= 0) {
            std::string dot = export_dot(trace, dot_round);
            if (dot_out.empty()) {
                std::cout << dot;
            } else {
                std::ofstream out(dot_out, std::ios::trunc);
                out << dot;
            }
        }
        if (!record_path.empty()) {
            save_scenario(scenario_from_trace(trace), record_path);
            std::cerr << "scenario written to " << record_path << "\n";
        }
        return static_cast<int>(trace.status);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
