#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "hetcomm/error.hpp"
#include "hetcomm/harness.hpp"

namespace hh = hetcomm::harness;

namespace {

struct Overrides {
  std::string scenario;
  std::string comm;
  std::string mixer;
  std::uint64_t steps = 0;
  std::uint64_t eval_interval = 0;
  std::size_t eval_episodes = 0;
  std::vector<std::uint64_t> seeds;
  std::string config;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--scenario", o.scenario, "Builtin scenario id, oracle id, or scenario file");
  cmd->add_option("--comm", o.comm, "Communication module")->check(CLI::IsMember({"rgcn", "gat", "none"}));
  cmd->add_option("--mixer", o.mixer, "Value mixing")->check(CLI::IsMember({"iql", "vdn"}));
  cmd->add_option("--steps", o.steps, "Total environment steps");
  cmd->add_option("--eval-interval", o.eval_interval, "Environment steps between evaluations");
  cmd->add_option("--eval-episodes", o.eval_episodes, "Greedy episodes per evaluation");
  cmd->add_option("--seed", o.seeds, "Seed (repeatable)");
  cmd->add_option("--config", o.config, "Training config file")->check(CLI::ExistingFile);
}

hh::TrainConfig resolve(const Overrides& o) {
  hh::TrainConfig c = o.config.empty() ? hh::TrainConfig{} : hh::load_config(o.config);
  if (!o.scenario.empty()) c.scenario = o.scenario;
  if (!o.comm.empty()) c.comm = hetcomm::comm::parse_comm_kind(o.comm);
  if (!o.mixer.empty()) c.mixer = hetcomm::learn::parse_mixer_kind(o.mixer);
  if (o.steps) c.total_steps = o.steps;
  if (o.eval_interval) c.eval_interval = o.eval_interval;
  if (o.eval_episodes) c.eval_episodes = o.eval_episodes;
  if (!o.seeds.empty()) c.seeds = o.seeds;
  c.validate();
  return c;
}

void print_row(const hh::MetricRow& r) {
  std::printf("seed %llu step %llu win %.3f defeated %.3f reward %.4f loss %.5g eps %.3f (%.1fs)\n",
              static_cast<unsigned long long>(r.seed), static_cast<unsigned long long>(r.env_step), r.win_rate,
              r.mean_defeated, r.mean_reward, r.loss, r.epsilon, r.wall_time);
  std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous-communication multi-agent Q-learning"};
  app.require_subcommand(1);

  Overrides train_o;
  std::string out_dir;
  std::string checkpoint;
  auto* train = app.add_subcommand("train", "Train and write metrics plus a checkpoint");
  add_run_flags(train, train_o);
  train->add_option("--out", out_dir, "Output directory (default $HETCOMM_OUT_DIR or ./runs)");
  train->add_option("--checkpoint", checkpoint, "Checkpoint path (single seed only)");

  std::string eval_ckpt;
  std::string eval_scenario;
  std::size_t eval_episodes = 32;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--scenario", eval_scenario, "Scenario (defaults to the trained one)");
  eval->add_option("--eval-episodes", eval_episodes, "Episodes");
  eval->add_option("--seed", eval_seed, "Evaluation seed");
  std::string eval_trace;
  eval->add_option("--trace", eval_trace, "Write a per-step episode trace to this file");

  std::vector<std::string> agg_files;
  std::string agg_out;
  auto* aggregate = app.add_subcommand("aggregate", "25/50/75 percentiles across seeds");
  aggregate->add_option("files", agg_files, "Metric CSV files")->required()->check(CLI::ExistingFile);
  aggregate->add_option("--out", agg_out, "Table path (default stdout)");

  std::string smoke_dir;
  auto* smoke = app.add_subcommand("smoke", "Invariant checks on tiny instances");
  smoke->add_option("--out", smoke_dir, "Scratch directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const hh::TrainConfig config = resolve(train_o);
      hh::TrainOptions opts;
      opts.out_dir = out_dir.empty() ? hh::default_out_dir() : std::filesystem::path(out_dir);
      if (!checkpoint.empty()) opts.checkpoint_path = checkpoint;
      opts.on_row = print_row;
      std::filesystem::create_directories(opts.out_dir);
      hh::save_config(opts.out_dir / (hh::run_id(config) + ".config.json"), config);
      for (const auto& run : hh::run_train(config, opts)) {
        std::printf("metrics %s\ncheckpoint %s\n", run.metrics_path.c_str(), run.checkpoint_path.c_str());
      }
    } else if (eval->parsed()) {
      std::ofstream trace_file;
      if (!eval_trace.empty()) {
        trace_file.open(eval_trace);
        if (!trace_file) throw hetcomm::Error("cannot write trace file " + eval_trace);
      }
      const auto s = hh::run_eval(eval_ckpt, eval_scenario, eval_episodes, eval_seed,
                                  eval_trace.empty() ? nullptr : &trace_file);
      std::printf("episode,won,defeated,reward,length\n");
      for (std::size_t k = 0; k < s.episodes.size(); ++k) {
        const auto& e = s.episodes[k];
        std::printf("%zu,%d,%zu,%.17g,%zu\n", k, e.won ? 1 : 0, e.defeated_enemies, e.total_reward, e.length);
      }
      std::printf("win_rate %.17g\nmean_defeated %.17g\nmean_reward %.17g\n", s.win_rate, s.mean_defeated,
                  s.mean_reward);
    } else if (aggregate->parsed()) {
      std::vector<std::filesystem::path> files(agg_files.begin(), agg_files.end());
      const auto rows = hh::aggregate_percentiles(files);
      if (!agg_out.empty()) {
        hh::write_percentile_table(agg_out, rows);
      } else {
        std::printf("env_step,metric,p25,p50,p75\n");
        for (const auto& r : rows) {
          std::printf("%llu,%s,%.17g,%.17g,%.17g\n", static_cast<unsigned long long>(r.env_step), r.metric.c_str(),
                      r.p25, r.p50, r.p75);
        }
      }
    } else if (smoke->parsed()) {
      const auto dir = smoke_dir.empty() ? std::filesystem::temp_directory_path() / "hetcomm_smoke"
                                         : std::filesystem::path(smoke_dir);
      bool all = true;
      for (const auto& c : hh::run_smoke(dir)) {
        std::printf("%s  %s: %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
        all = all && c.passed;
      }
      return all ? 0 : 1;
    }
  } catch (const hetcomm::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
