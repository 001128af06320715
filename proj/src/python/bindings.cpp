#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hetcomm/error.hpp"
#include "hetcomm/harness.hpp"
#include "hetcomm/learner.hpp"
#include "hetcomm/oracle_envs.hpp"
#include "hetcomm/policy_network.hpp"

namespace py = pybind11;
using namespace hetcomm;

namespace {

py::dict step_to_dict(const env::EnvStepResult& r) {
  py::dict d;
  d["observations"] = r.observations;
  std::vector<std::pair<std::size_t, std::size_t>> arcs;
  for (const auto& a : r.graph.arcs()) arcs.emplace_back(a.source, a.target);
  d["arcs"] = arcs;
  std::vector<std::vector<std::size_t>> masks;
  for (const auto& m : r.masks) masks.push_back(m.legal_actions());
  d["legal_actions"] = masks;
  d["alive"] = std::vector<bool>(r.alive.begin(), r.alive.end());
  d["reward"] = r.reward;
  d["done"] = r.done;
  d["won"] = r.info.won;
  d["defeated_enemies"] = r.info.defeated_enemies;
  return d;
}

py::dict summary_to_dict(const harness::EvalSummary& s) {
  py::dict d;
  d["win_rate"] = s.win_rate;
  d["mean_defeated"] = s.mean_defeated;
  d["mean_reward"] = s.mean_reward;
  py::list eps;
  for (const auto& e : s.episodes) {
    py::dict x;
    x["won"] = e.won;
    x["defeated_enemies"] = e.defeated_enemies;
    x["total_reward"] = e.total_reward;
    x["length"] = e.length;
    eps.append(x);
  }
  d["episodes"] = eps;
  return d;
}

py::dict row_to_dict(const harness::MetricRow& r) {
  py::dict d;
  d["run_id"] = r.run_id;
  d["seed"] = r.seed;
  d["env_step"] = r.env_step;
  d["win_rate"] = r.win_rate;
  d["mean_defeated"] = r.mean_defeated;
  d["mean_reward"] = r.mean_reward;
  d["loss"] = r.loss;
  d["epsilon"] = r.epsilon;
  d["wall_time"] = r.wall_time;
  return d;
}

}  // namespace

PYBIND11_MODULE(_hetcomm, m) {
  m.doc() = "Heterogeneous agent communication: simulator, networks and training harness";

  // Translators run newest first, so the base is registered before subclasses.
  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base);
  py::register_exception<GraphError>(m, "GraphError", base);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<EnvError>(m, "EnvError", base);
  py::register_exception<CheckpointError>(m, "CheckpointError", base);

  py::class_<HeterogeneousAgentGraph>(m, "AgentGraph")
      .def(py::init([](std::size_t num_classes, const std::vector<std::size_t>& classes,
                       const std::vector<std::pair<std::size_t, std::size_t>>& arcs) {
             std::vector<AgentClassId> ids;
             for (auto c : classes) ids.push_back({c});
             std::vector<Arc> a;
             for (auto [f, t] : arcs) a.push_back({f, t});
             return HeterogeneousAgentGraph::build(num_classes, std::move(ids), std::move(a));
           }),
           py::arg("num_classes"), py::arg("node_classes"), py::arg("arcs"))
      .def_property_readonly("num_nodes", &HeterogeneousAgentGraph::num_nodes)
      .def_property_readonly("num_relations", &HeterogeneousAgentGraph::num_relations)
      .def_property_readonly("arc_relations", [](const HeterogeneousAgentGraph& g) {
        return std::vector<std::size_t>(g.arc_relations().begin(), g.arc_relations().end());
      })
      .def("in_neighbors", &HeterogeneousAgentGraph::in_neighbors)
      .def("degree_normalizer", &HeterogeneousAgentGraph::degree_normalizer)
      .def("dump", &HeterogeneousAgentGraph::dump)
      .def_static("parse", &HeterogeneousAgentGraph::parse, py::arg("text"), py::arg("num_classes"));

  py::class_<env::Environment, std::unique_ptr<env::Environment>>(m, "Environment")
      .def_property_readonly("spec",
                             [](const env::Environment& e) {
                               const auto& s = e.spec();
                               py::dict d;
                               d["name"] = s.name;
                               d["num_agents"] = s.num_agents;
                               d["num_classes"] = s.num_classes;
                               std::vector<std::size_t> classes;
                               for (auto c : s.agent_classes) classes.push_back(c.value);
                               d["agent_classes"] = classes;
                               d["class_names"] = s.class_names;
                               d["num_actions"] = s.num_actions;
                               d["max_episode_steps"] = s.max_episode_steps;
                               d["num_enemies"] = s.num_enemies;
                               return d;
                             })
      .def("reset", [](env::Environment& e, std::uint64_t seed) { return step_to_dict(e.reset(seed)); },
           py::arg("seed"))
      .def("step", [](env::Environment& e, const std::vector<std::size_t>& a) { return step_to_dict(e.step(a)); },
           py::arg("joint_action"));
  m.def("make_environment", &env::make_environment, py::arg("id_or_path"));

  m.def("vdn_mix", [](const std::vector<double>& q) { return learn::vdn_mix(q); }, py::arg("chosen_q"));
  m.def("epsilon", [](std::uint64_t step, double eps_min, double eps_max, std::uint64_t decay) {
    return policy::EpsilonSchedule(eps_min, eps_max, decay).value(step);
  }, py::arg("step"), py::arg("eps_min") = 0.1, py::arg("eps_max") = 0.95, py::arg("decay_steps") = 50000);
  m.def("percentile", &harness::percentile, py::arg("values"), py::arg("q"));

  m.def("default_config", [] { return harness::config_to_text(harness::TrainConfig{}); });
  m.def("normalize_config", [](const std::string& text) {
    return harness::config_to_text(harness::parse_config(text));
  }, py::arg("config_json"), "Validates a config and returns it with every field filled in.");
  m.def("train", [](const std::string& config_text, const std::filesystem::path& out_dir) {
    const auto config = harness::parse_config(config_text);
    std::vector<harness::SeedRun> runs;
    {
      py::gil_scoped_release release;
      harness::TrainOptions o;
      o.out_dir = out_dir;
      runs = harness::run_train(config, o);
    }
    py::list out;
    for (const auto& r : runs) {
      py::dict d;
      d["seed"] = r.seed;
      d["metrics_path"] = r.metrics_path.string();
      d["checkpoint_path"] = r.checkpoint_path.string();
      py::list rows;
      for (const auto& row : r.rows) rows.append(row_to_dict(row));
      d["rows"] = rows;
      out.append(d);
    }
    return out;
  }, py::arg("config_json"), py::arg("out_dir"));
  m.def("evaluate", [](const std::filesystem::path& checkpoint, const std::string& scenario, std::size_t episodes,
                       std::uint64_t seed) {
    harness::EvalSummary s;
    {
      py::gil_scoped_release release;
      s = harness::run_eval(checkpoint, scenario, episodes, seed);
    }
    return summary_to_dict(s);
  }, py::arg("checkpoint"), py::arg("scenario") = "", py::arg("episodes") = 32, py::arg("seed") = 0);
  m.def("aggregate", [](const std::vector<std::filesystem::path>& files, const std::filesystem::path& out) {
    const auto rows = harness::aggregate_percentiles(files);
    harness::write_percentile_table(out, rows);
    return rows.size();
  }, py::arg("metric_files"), py::arg("out_path"));
  m.def("smoke", [](const std::filesystem::path& scratch) {
    py::list out;
    for (const auto& c : harness::run_smoke(scratch)) {
      py::dict d;
      d["name"] = c.name;
      d["passed"] = c.passed;
      d["detail"] = c.detail;
      out.append(d);
    }
    return out;
  }, py::arg("scratch_dir"));
}
