#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hetcomm/action_mask.hpp"
#include "hetcomm/agent_graph.hpp"
#include "hetcomm/autodiff/parameter_store.hpp"
#include "hetcomm/autodiff/tensor.hpp"
#include "hetcomm/policy_network.hpp"
#include "hetcomm/random.hpp"

namespace hetcomm::learn {

enum class MixerKind { iql, vdn };

std::string_view to_string(MixerKind kind);
MixerKind parse_mixer_kind(std::string_view text);

// One decision point: the state seen at t, the joint action taken there and
// what followed. The observation/graph/masks at t+1 live in the next step.
struct StepRecord {
  std::vector<double> observations;  // [agents * padded width], row-major
  HeterogeneousAgentGraph graph;
  std::vector<ActionMask> masks;
  std::vector<std::uint8_t> alive;
  std::vector<std::size_t> actions;
  double reward = 0.0;
  bool terminal = false;
};

struct EpisodeRecord {
  std::size_t num_agents = 0;
  std::size_t observation_width = 0;
  std::vector<StepRecord> steps;

  std::size_t length() const noexcept { return steps.size(); }
  // Exactly one terminal flag, on the last step; consistent shapes.
  void validate() const;
};

// Ring of whole episodes; the oldest episode is evicted first.
class EpisodicReplayBuffer {
 public:
  explicit EpisodicReplayBuffer(std::size_t capacity);

  void add(EpisodeRecord episode);
  std::size_t size() const noexcept { return episodes_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::uint64_t insertions() const noexcept { return insertions_; }
  const EpisodeRecord& at(std::size_t i) const { return episodes_.at(i); }

  // Uniform with replacement.
  std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<EpisodeRecord> episodes_;
  std::uint64_t insertions_ = 0;
};

// Q_team = sum of the given per-agent values.
double vdn_mix(std::span<const double> chosen_q);
ad::Tensor vdn_mix(const ad::Tensor& chosen_q);

// Bootstrapped target(s) for one transition of one episode.
//
// The next-step tables are [agents, actions] row-major. For each agent
// alive at t+1, a* = masked argmax of the online values and the target
// network evaluates it. vdn returns one value, r + gamma * sum over living
// agents. iql returns one value per agent; an agent dead at t+1 gets r.
// At a terminal step every target is r and the next-step inputs are unused.
std::vector<double> double_q_targets(std::span<const double> online_next_q, std::span<const double> target_next_q,
                                     std::span<const ActionMask> next_masks,
                                     std::span<const std::uint8_t> next_alive, double reward, bool terminal,
                                     std::size_t num_agents, double gamma, MixerKind mixer);

struct TdLossResult {
  ad::Tensor loss;
  // Online Q per padded time step, [batch * agents, actions]; exposed so
  // tests can probe gradients reaching illegal entries.
  std::vector<ad::Tensor> online_q;
  std::size_t valid_terms = 0;
};

// Mean squared TD error over a batch padded to its longest episode.
// vdn: one term per valid (episode, step) using the team sums over agents
// alive at t. iql: one term per valid (episode, step, living agent).
// Only the chosen (always legal) Q entries enter the loss. The online pass
// is recorded if a record is active; the target pass never is.
TdLossResult td_loss(const policy::PolicyNetwork& network, const ad::ParameterStore& online,
                     const ad::ParameterStore& target, std::span<const EpisodeRecord* const> batch, double gamma,
                     MixerKind mixer);

struct LearnerConfig {
  MixerKind mixer = MixerKind::vdn;
  double gamma = 0.99;
  std::size_t batch_size = 32;
  std::uint64_t target_sync_interval = 250;  // optimizer steps
  ad::AdamOptions adam;
  double max_grad_norm = 0.0;  // 0 disables clipping
};

struct TrainMetrics {
  double loss = 0.0;
  double grad_norm = 0.0;
  std::uint64_t optimizer_step = 0;
  bool synced = false;
};

// Online/target pair plus the optimizer loop.
class Learner {
 public:
  Learner(const policy::PolicyNetwork& network, ad::ParameterStore online, LearnerConfig config);

  // nullopt when the buffer holds fewer than batch_size episodes.
  std::optional<TrainMetrics> train_step(const EpisodicReplayBuffer& buffer, Rng& rng);

  const ad::ParameterStore& online() const noexcept { return online_; }
  ad::ParameterStore& online() noexcept { return online_; }
  const ad::ParameterStore& target() const noexcept { return target_; }
  std::uint64_t optimizer_steps() const noexcept { return online_.step_counter(); }
  const LearnerConfig& config() const noexcept { return config_; }

  void sync_target();

 private:
  const policy::PolicyNetwork& network_;
  LearnerConfig config_;
  ad::ParameterStore online_;
  ad::ParameterStore target_;
};

}  // namespace hetcomm::learn
