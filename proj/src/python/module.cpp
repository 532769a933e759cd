#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "knowflow/orchestrator.hpp"

namespace py = pybind11;
using namespace knowflow;

namespace {

py::dict trace_summary(const RunTrace& trace) {
    py::dict out;
    out["run_id"] = trace.run_id;
    out["status"] = static_cast<int>(trace.status);
    out["degraded_reason"] = trace.degraded_reason;
    py::list rounds;
    for (const auto& record : trace.rounds) {
        py::dict r;
        r["round"] = record.round;
        r["frontier"] = record.frontier;
        r["blocked"] = record.blocked;
        rounds.append(r);
    }
    out["rounds"] = rounds;
    if (trace.conclusion) {
        out["answer"] = trace.conclusion->answer;
        out["sources"] = trace.conclusion->sources;
    } else {
        out["answer"] = py::none();
        out["sources"] = py::list();
    }
    out["final_graph"] = serialize_graph(trace.final_graph);
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Knowledge-flow orchestration engine";

    py::register_exception<Error>(m, "KnowflowError");

    py::class_<FlowGraph>(m, "Graph")
        .def("serialize", &serialize_graph)
        .def("to_dot", &to_dot)
        .def("frontier", &frontier)
        .def("layers", &topological_layers)
        .def("node_ids",
             [](const FlowGraph& g) {
                 std::vector<std::string> ids;
                 for (const auto& n : g.nodes) ids.push_back(n.id);
                 return ids;
             })
        .def_property_readonly("query_node_id",
                               [](const FlowGraph& g) { return g.query_node_id; })
        .def("validate", [](const FlowGraph& g) {
            py::list out;
            for (const auto& v : validate(g).violations) {
                py::dict item;
                item["code"] = v.code;
                item["subject"] = v.subject;
                item["message"] = v.message;
                out.append(item);
            }
            return out;
        });

    m.def("new_graph", &new_graph, py::arg("query"));
    m.def("parse_graph", &parse_graph, py::arg("text"));
    m.def(
        "apply_plan",
        [](const FlowGraph& graph, const std::string& plan_json) {
            return apply_plan(graph, parse_plan(plan_json));
        },
        py::arg("graph"), py::arg("plan_json"),
        "Apply a refinement plan (wire-format JSON or \"no changes\") transactionally.");

    m.def(
        "run_scripted",
        [](const std::string& query, const std::string& scenario_path, const std::string& mode,
           const std::string& planner, bool refine, int max_rounds, int max_parallel,
           const std::string& trace_path, const std::string& snapshots_dir,
           const std::string& report_out) {
            RunConfig config;
            config.query = query;
            config.mode = summary_mode_from_string(mode);
            config.planner_mode = planner_mode_from_string(planner);
            config.planner.planner_mode = config.planner_mode;
            config.refinement_enabled = refine;
            config.max_rounds = max_rounds;
            config.executor.max_parallel = max_parallel;
            config.backend = scripted_descriptor(scenario_path);
            config.outputs.trace = trace_path;
            config.outputs.snapshots_dir = snapshots_dir;
            config.outputs.report = report_out;
            return trace_summary(run(config));
        },
        py::arg("query"), py::arg("scenario_path"), py::arg("mode") = "qa",
        py::arg("planner") = "flow", py::arg("refine") = true, py::arg("max_rounds") = 12,
        py::arg("max_parallel") = 8, py::arg("trace_path") = "", py::arg("snapshots_dir") = "",
        py::arg("report_out") = "",
        "Run a full scripted flow and return a summary dict.");
}
