#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hetcomm/autodiff/parameter_store.hpp"
#include "hetcomm/comm_layers.hpp"
#include "hetcomm/environment.hpp"
#include "hetcomm/learner.hpp"
#include "hetcomm/policy_network.hpp"

namespace hetcomm::harness {

struct TrainConfig {
  std::string scenario = "m3";
  comm::CommKind comm = comm::CommKind::rgcn;
  learn::MixerKind mixer = learn::MixerKind::vdn;
  std::uint64_t total_steps = 1'000'000;
  std::uint64_t eval_interval = 10'000;
  std::size_t eval_episodes = 32;
  std::vector<std::uint64_t> seeds = {0};

  double gamma = 0.99;
  double learning_rate = 2.5e-4;
  double l2_coef = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double eps_min = 0.1;
  double eps_max = 0.95;
  std::uint64_t eps_decay_steps = 50'000;
  std::uint64_t target_sync_interval = 250;

  std::size_t buffer_capacity = 2000;
  std::size_t batch_size = 32;
  // Optimizer steps start once this many episodes are stored (at least
  // batch_size); afterwards one step every train_interval env steps.
  std::size_t warmup_episodes = 32;
  std::uint64_t train_interval = 1;
  double max_grad_norm = 0.0;

  std::size_t hidden_width = 96;
  std::size_t comm_layers = 2;
  std::size_t num_bases = 2;
  std::size_t num_heads = 3;
  double negative_slope = 0.01;
  double attention_slope = 0.2;
  double forget_bias = 1.0;
  bool class_one_hot = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// JSON text; every field is written, unknown keys are rejected on load and
// missing keys keep their defaults.
std::string config_to_text(const TrainConfig& config);
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const TrainConfig& config);

// "<scenario>_<mixer>_<comm>", with path separators and dots replaced.
std::string run_id(const TrainConfig& config);

// Network and padding derived from an environment and a config.
struct AgentSetup {
  policy::NetworkConfig network;
  std::size_t padded_width = 0;  // max raw width, excluding the class block
  bool class_one_hot = true;
};
AgentSetup make_agent_setup(const env::EnvSpec& spec, const TrainConfig& config);

// Row-major [agents, network input width].
std::vector<double> padded_joint_observation(const env::EnvStepResult& result, const env::EnvSpec& spec,
                                             const AgentSetup& setup);

struct EpisodeOutcome {
  bool won = false;
  std::size_t defeated_enemies = 0;
  double total_reward = 0.0;
  std::size_t length = 0;
};

struct EvalSummary {
  double win_rate = 0.0;
  double mean_defeated = 0.0;
  double mean_reward = 0.0;
  std::vector<EpisodeOutcome> episodes;
};

// Greedy rollouts; episode k is reset with mix_seed(seed, k).
EvalSummary evaluate(const policy::PolicyNetwork& network, const AgentSetup& setup, const ad::ParameterStore& store,
                     env::Environment& environment, std::size_t episodes, std::uint64_t seed);

struct MetricRow {
  std::string run_id;
  std::uint64_t seed = 0;
  std::uint64_t env_step = 0;
  double win_rate = 0.0;
  double mean_defeated = 0.0;
  double mean_reward = 0.0;
  double loss = 0.0;  // mean over the block; NaN before the first update
  double epsilon = 0.0;
  double wall_time = 0.0;  // seconds since the run started
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<MetricRow> rows;
  std::filesystem::path metrics_path;
  std::filesystem::path checkpoint_path;
};

struct TrainOptions {
  std::filesystem::path out_dir;
  // Overrides the checkpoint location; only valid with a single seed.
  std::optional<std::filesystem::path> checkpoint_path;
  std::function<void(const MetricRow&)> on_row;
};

// Writes "<run_id>_seed<k>.csv" (deterministic columns), a sibling
// ".timing.csv" with wall-clock seconds, and "<run_id>_seed<k>.ckpt".
std::vector<SeedRun> run_train(const TrainConfig& config, const TrainOptions& options);
SeedRun run_train_seed(const TrainConfig& config, std::uint64_t seed, const TrainOptions& options);

std::string metrics_header();
std::string format_metric_row(const MetricRow& row);
std::vector<MetricRow> read_metrics(const std::filesystem::path& path);

// Checkpoint metadata carries the config so eval can rebuild the network.
void save_agent_checkpoint(const std::filesystem::path& path, const TrainConfig& config,
                           const ad::ParameterStore& store);
struct LoadedAgent {
  TrainConfig config;
  ad::ParameterStore store;
};
LoadedAgent load_agent_checkpoint(const std::filesystem::path& path);

// Greedy evaluation of a checkpoint. An empty scenario uses the one it was
// trained on. Parameter shape mismatches are reported by name. A trace sink
// receives one line per battle step (ignored for oracle environments).
EvalSummary run_eval(const std::filesystem::path& checkpoint, const std::string& scenario, std::size_t episodes,
                     std::uint64_t seed, std::ostream* trace = nullptr);

// Linear interpolation between order statistics (q in [0, 1]).
double percentile(std::vector<double> values, double q);

struct PercentileRow {
  std::uint64_t env_step = 0;
  std::string metric;
  double p25 = 0.0;
  double p50 = 0.0;
  double p75 = 0.0;
};

// Needs at least two files whose env steps line up exactly.
std::vector<PercentileRow> aggregate_percentiles(const std::vector<std::filesystem::path>& metric_files);
void write_percentile_table(const std::filesystem::path& path, const std::vector<PercentileRow>& rows);

struct SmokeCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};
// Invariant checks on tiny instances (gradients, determinism, masks,
// config and checkpoint round-trips).
std::vector<SmokeCheck> run_smoke(const std::filesystem::path& scratch_dir);

// HETCOMM_OUT_DIR, else "runs".
std::filesystem::path default_out_dir();

}  // namespace hetcomm::harness
