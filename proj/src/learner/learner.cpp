#include "hetcomm/learner.hpp"

#include <algorithm>
#include <string>

#include "hetcomm/autodiff/ops.hpp"
#include "hetcomm/autodiff/record.hpp"
#include "hetcomm/error.hpp"

namespace hetcomm::learn {

using ad::Tensor;

std::string_view to_string(MixerKind kind) { return kind == MixerKind::iql ? "iql" : "vdn"; }

MixerKind parse_mixer_kind(std::string_view text) {
  if (text == "iql") return MixerKind::iql;
  if (text == "vdn") return MixerKind::vdn;
  throw ConfigError("unknown mixer '" + std::string(text) + "' (expected iql or vdn)");
}

void EpisodeRecord::validate() const {
  if (steps.empty()) throw Error("episode record has no steps");
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const StepRecord& s = steps[t];
    if (s.terminal != (t + 1 == steps.size())) {
      throw Error("episode record: terminal flag must be set on the last step only (step " + std::to_string(t) +
                  ")");
    }
    if (s.observations.size() != num_agents * observation_width || s.graph.num_nodes() != num_agents ||
        s.masks.size() != num_agents || s.alive.size() != num_agents || s.actions.size() != num_agents) {
      throw ShapeError("episode_record", "step " + std::to_string(t) + " does not match " +
                                             std::to_string(num_agents) + " agents of width " +
                                             std::to_string(observation_width));
    }
  }
}

EpisodicReplayBuffer::EpisodicReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void EpisodicReplayBuffer::add(EpisodeRecord episode) {
  episode.validate();
  if (episodes_.size() == capacity_) episodes_.pop_front();
  episodes_.push_back(std::move(episode));
  ++insertions_;
}

std::vector<std::size_t> EpisodicReplayBuffer::sample_indices(std::size_t count, Rng& rng) const {
  if (episodes_.empty()) throw Error("cannot sample from an empty replay buffer");
  std::vector<std::size_t> out(count);
  for (auto& i : out) i = uniform_index(rng, episodes_.size());
  return out;
}

double vdn_mix(std::span<const double> chosen_q) {
  double total = 0.0;
  for (double q : chosen_q) total += q;
  return total;
}

Tensor vdn_mix(const Tensor& chosen_q) { return ad::sum(chosen_q); }

std::vector<double> double_q_targets(std::span<const double> online_next_q, std::span<const double> target_next_q,
                                     std::span<const ActionMask> next_masks,
                                     std::span<const std::uint8_t> next_alive, double reward, bool terminal,
                                     std::size_t num_agents, double gamma, MixerKind mixer) {
  const std::size_t outputs = mixer == MixerKind::vdn ? 1 : num_agents;
  if (terminal) return std::vector<double>(outputs, reward);
  if (num_agents == 0 || next_masks.size() != num_agents || next_alive.size() != num_agents ||
      online_next_q.size() != target_next_q.size() || online_next_q.size() % num_agents != 0) {
    throw ShapeError("double_q_targets", "inconsistent next-step tables for " + std::to_string(num_agents) +
                                             " agents");
  }
  const std::size_t n_actions = online_next_q.size() / num_agents;
  std::vector<double> bootstrap(num_agents, 0.0);
  for (std::size_t u = 0; u < num_agents; ++u) {
    if (!next_alive[u]) continue;
    const std::size_t best = policy::masked_argmax(online_next_q.subspan(u * n_actions, n_actions), next_masks[u]);
    bootstrap[u] = target_next_q[u * n_actions + best];
  }
  if (mixer == MixerKind::vdn) return {reward + gamma * vdn_mix(bootstrap)};
  std::vector<double> out(num_agents);
  for (std::size_t u = 0; u < num_agents; ++u) out[u] = reward + gamma * bootstrap[u];
  return out;
}

namespace {

struct PaddedStep {
  Tensor observations;
  HeterogeneousAgentGraph graph;
};

std::vector<PaddedStep> batch_inputs(std::span<const EpisodeRecord* const> batch, std::size_t horizon) {
  const std::size_t n_agents = batch.front()->num_agents;
  const std::size_t width = batch.front()->observation_width;
  const std::size_t rows = batch.size() * n_agents;
  const std::size_t num_classes = batch.front()->steps.front().graph.num_classes();

  std::vector<HeterogeneousAgentGraph> idle;
  idle.reserve(batch.size());
  for (const EpisodeRecord* ep : batch) {
    const auto classes = ep->steps.front().graph.node_classes();
    idle.push_back(HeterogeneousAgentGraph::build(num_classes, {classes.begin(), classes.end()}, {}));
  }

  std::vector<PaddedStep> out;
  out.reserve(horizon);
  std::vector<HeterogeneousAgentGraph> parts(batch.size());
  for (std::size_t t = 0; t < horizon; ++t) {
    std::vector<double> obs(rows * width, 0.0);
    for (std::size_t e = 0; e < batch.size(); ++e) {
      if (t < batch[e]->length()) {
        const StepRecord& s = batch[e]->steps[t];
        std::copy(s.observations.begin(), s.observations.end(),
                  obs.begin() + static_cast<std::ptrdiff_t>(e * n_agents * width));
        parts[e] = s.graph;
      } else {
        parts[e] = idle[e];
      }
    }
    out.push_back({Tensor::from({rows, width}, std::move(obs)), HeterogeneousAgentGraph::disjoint_union(parts)});
  }
  return out;
}

std::vector<Tensor> unroll(const policy::PolicyNetwork& network, const ad::ParameterStore& store,
                           const std::vector<PaddedStep>& inputs) {
  auto state = policy::RecurrentState::zeros(inputs.front().observations.rows(), network.config().hidden_width);
  std::vector<Tensor> q;
  q.reserve(inputs.size());
  for (const auto& in : inputs) {
    auto out = network.step(store, in.observations, in.graph, state);
    q.push_back(out.q);
    state = out.state;
  }
  return q;
}

}  // namespace

TdLossResult td_loss(const policy::PolicyNetwork& network, const ad::ParameterStore& online,
                     const ad::ParameterStore& target, std::span<const EpisodeRecord* const> batch, double gamma,
                     MixerKind mixer) {
  if (batch.empty()) throw Error("td_loss: empty batch");
  const std::size_t n_agents = batch.front()->num_agents;
  const std::size_t width = batch.front()->observation_width;
  std::size_t horizon = 0;
  for (const EpisodeRecord* ep : batch) {
    if (ep->num_agents != n_agents || ep->observation_width != width || ep->steps.empty()) {
      throw ShapeError("td_loss", "episodes in a batch must share agent count and observation width");
    }
    horizon = std::max(horizon, ep->length());
  }
  const std::size_t n_episodes = batch.size();
  const std::size_t rows = n_episodes * n_agents;
  const std::size_t n_actions = network.config().num_actions;

  const auto inputs = batch_inputs(batch, horizon);
  TdLossResult result;
  result.online_q = unroll(network, online, inputs);
  std::vector<Tensor> target_q;
  {
    ad::NoRecord no_record;
    target_q = unroll(network, target, inputs);
  }

  Tensor total;
  for (std::size_t t = 0; t < horizon; ++t) {
    std::vector<std::size_t> actions(rows, 0);
    std::vector<double> agent_weight(rows, 0.0);
    const std::size_t out_rows = mixer == MixerKind::vdn ? n_episodes : rows;
    std::vector<double> y(out_rows, 0.0);
    std::size_t terms = 0;

    for (std::size_t e = 0; e < n_episodes; ++e) {
      const EpisodeRecord& ep = *batch[e];
      if (t >= ep.length()) continue;
      const StepRecord& s = ep.steps[t];
      const std::size_t base = e * n_agents;
      std::span<const double> online_next;
      std::span<const double> target_next;
      std::span<const ActionMask> next_masks;
      std::span<const std::uint8_t> next_alive;
      if (!s.terminal) {
        const StepRecord& next = ep.steps[t + 1];
        online_next = result.online_q[t + 1].values().subspan(base * n_actions, n_agents * n_actions);
        target_next = target_q[t + 1].values().subspan(base * n_actions, n_agents * n_actions);
        next_masks = next.masks;
        next_alive = next.alive;
      }
      const auto targets = double_q_targets(online_next, target_next, next_masks, next_alive, s.reward, s.terminal,
                                            n_agents, gamma, mixer);
      bool any_alive = false;
      for (std::size_t u = 0; u < n_agents; ++u) {
        actions[base + u] = s.actions[u];
        if (!s.alive[u]) continue;
        any_alive = true;
        agent_weight[base + u] = 1.0;
        if (mixer == MixerKind::iql) {
          y[base + u] = targets[u];
          ++terms;
        }
      }
      if (mixer == MixerKind::vdn && any_alive) {
        y[e] = targets[0];
        ++terms;
      }
    }
    if (terms == 0) continue;
    result.valid_terms += terms;

    Tensor chosen = ad::pick(result.online_q[t], actions);  // [rows, 1]
    Tensor predicted;
    if (mixer == MixerKind::vdn) {
      std::vector<double> team(n_episodes * rows, 0.0);
      for (std::size_t e = 0; e < n_episodes; ++e) {
        for (std::size_t u = 0; u < n_agents; ++u) team[e * rows + e * n_agents + u] = agent_weight[e * n_agents + u];
      }
      predicted = ad::matmul(Tensor::from({n_episodes, rows}, std::move(team)), chosen);
    } else {
      predicted = ad::mul(chosen, Tensor::from({rows, 1}, std::move(agent_weight)));
    }
    Tensor step_sum = ad::sum(ad::square(ad::sub(predicted, Tensor::from({out_rows, 1}, std::move(y)))));
    total = total.defined() ? ad::add(total, step_sum) : step_sum;
  }
  if (result.valid_terms == 0) throw Error("td_loss: batch has no valid terms");
  result.loss = ad::scale(total, 1.0 / static_cast<double>(result.valid_terms));
  return result;
}

Learner::Learner(const policy::PolicyNetwork& network, ad::ParameterStore online, LearnerConfig config)
    : network_(network), config_(config), online_(std::move(online)), target_(online_.clone()) {
  if (config_.batch_size == 0) throw ConfigError("batch size must be positive");
  if (config_.target_sync_interval == 0) throw ConfigError("target sync interval must be positive");
}

void Learner::sync_target() { target_.copy_values_from(online_); }

std::optional<TrainMetrics> Learner::train_step(const EpisodicReplayBuffer& buffer, Rng& rng) {
  if (buffer.size() < config_.batch_size) return std::nullopt;
  const auto indices = buffer.sample_indices(config_.batch_size, rng);
  std::vector<const EpisodeRecord*> batch;
  batch.reserve(indices.size());
  for (auto i : indices) batch.push_back(&buffer.at(i));

  online_.zero_grad();
  ad::ComputationRecord record;
  TdLossResult td;
  {
    ad::ActiveRecord active(record);
    td = td_loss(network_, online_, target_, batch, config_.gamma, config_.mixer);
  }
  record.backward(td.loss);

  TrainMetrics m;
  m.loss = td.loss.item();
  m.grad_norm = online_.grad_norm();
  if (config_.max_grad_norm > 0.0) online_.clip_grad_norm(config_.max_grad_norm);
  ad::adam_step(online_, config_.adam);
  m.optimizer_step = online_.step_counter();
  if (m.optimizer_step % config_.target_sync_interval == 0) {
    sync_target();
    m.synced = true;
  }
  return m;
}

}  // namespace hetcomm::learn
