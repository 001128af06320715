#include "hetcomm/policy_network.hpp"

#include <algorithm>
#include <limits>

#include "hetcomm/autodiff/ops.hpp"
#include "hetcomm/error.hpp"

namespace hetcomm::policy {

using ad::Tensor;

PaddedObservation pad_observation(std::span<const double> raw, std::size_t padded_width,
                                  std::optional<ClassOneHot> class_block) {
  if (raw.size() > padded_width) {
    throw ShapeError("pad_observation",
                     "observation width " + std::to_string(raw.size()) + " exceeds " + std::to_string(padded_width));
  }
  PaddedObservation out;
  out.valid_width = raw.size();
  const std::size_t extra = class_block ? class_block->num_classes : 0;
  out.values.assign(padded_width + extra, 0.0);
  std::ranges::copy(raw, out.values.begin());
  if (class_block) {
    if (class_block->agent_class.value >= class_block->num_classes) {
      throw ShapeError("pad_observation", "class id outside one-hot block");
    }
    out.values[padded_width + class_block->agent_class.value] = 1.0;
  }
  return out;
}

RecurrentState RecurrentState::zeros(std::size_t agents, std::size_t width) {
  return {Tensor::zeros({agents, width}), Tensor::zeros({agents, width})};
}

namespace {

comm::CommModuleConfig with_width(comm::CommModuleConfig c, std::size_t width) {
  c.width = width;
  return c;
}

}  // namespace

PolicyNetwork::PolicyNetwork(NetworkConfig config)
    : config_(config),
      comm_(with_width(config.comm, config.hidden_width), config.num_classes * config.num_classes) {
  config_.comm.width = config_.hidden_width;
  if (config_.input_width == 0 || config_.num_actions == 0 || config_.hidden_width == 0) {
    throw ConfigError("network needs positive input width, action count and hidden width");
  }
}

void PolicyNetwork::init_parameters(ad::ParameterStore& store, std::uint64_t seed) const {
  Rng rng(seed);
  const std::size_t in = config_.input_width;
  const std::size_t w = config_.hidden_width;
  const std::size_t a = config_.num_actions;

  store.add("encoder.weight", {in, w}, fan_in_uniform(in * w, in, rng));
  store.add("encoder.bias", {w}, fan_in_uniform(w, in, rng));

  comm_.init_parameters(store, rng);

  store.add("rnn.w_input", {w, 4 * w}, fan_in_uniform(w * 4 * w, w, rng));
  store.add("rnn.w_hidden", {w, 4 * w}, fan_in_uniform(w * 4 * w, w, rng));
  std::vector<double> bias(4 * w, 0.0);
  std::fill(bias.begin() + static_cast<std::ptrdiff_t>(w), bias.begin() + static_cast<std::ptrdiff_t>(2 * w),
            config_.forget_bias);
  store.add("rnn.bias", {4 * w}, std::move(bias));

  store.add("dueling.value_w", {w, 1}, fan_in_uniform(w, w, rng));
  store.add("dueling.value_b", {1}, fan_in_uniform(1, w, rng));
  store.add("dueling.adv_w", {w, a}, fan_in_uniform(w * a, w, rng));
  store.add("dueling.adv_b", {a}, fan_in_uniform(a, w, rng));
}

Tensor PolicyNetwork::encode(const ad::ParameterStore& store, const Tensor& observations) const {
  if (observations.rank() != 2 || observations.cols() != config_.input_width) {
    throw ShapeError("encode", ad::to_string(observations.shape()) + " vs input width " +
                                   std::to_string(config_.input_width));
  }
  return ad::tanh(ad::add(ad::matmul(observations, store.get("encoder.weight")), store.get("encoder.bias")));
}

RecurrentState PolicyNetwork::recurrent_step(const ad::ParameterStore& store, const Tensor& input,
                                             const RecurrentState& state) const {
  const std::size_t w = config_.hidden_width;
  if (state.hidden.rows() != input.rows() || state.hidden.cols() != w || state.cell.cols() != w) {
    throw ShapeError("recurrent_step", ad::to_string(input.shape()) + " with state " +
                                           ad::to_string(state.hidden.shape()));
  }
  Tensor gates = ad::add(ad::add(ad::matmul(input, store.get("rnn.w_input")),
                                 ad::matmul(state.hidden, store.get("rnn.w_hidden"))),
                         store.get("rnn.bias"));
  Tensor in_gate = ad::sigmoid(ad::slice(gates, 1, 0, w));
  Tensor forget_gate = ad::sigmoid(ad::slice(gates, 1, w, 2 * w));
  Tensor candidate = ad::tanh(ad::slice(gates, 1, 2 * w, 3 * w));
  Tensor out_gate = ad::sigmoid(ad::slice(gates, 1, 3 * w, 4 * w));
  Tensor cell = ad::add(ad::mul(forget_gate, state.cell), ad::mul(in_gate, candidate));
  Tensor hidden = ad::mul(out_gate, ad::tanh(cell));
  return {hidden, cell};
}

Tensor dueling_combine(const Tensor& value, const Tensor& advantage) {
  if (value.rank() != 2 || value.cols() != 1 || value.rows() != advantage.rows()) {
    throw ShapeError("dueling_combine", ad::to_string(value.shape()) + " and " + ad::to_string(advantage.shape()));
  }
  return ad::add(value, ad::sub(advantage, ad::mean(advantage, 1)));
}

Tensor PolicyNetwork::dueling_head(const ad::ParameterStore& store, const Tensor& hidden) const {
  Tensor value = ad::add(ad::matmul(hidden, store.get("dueling.value_w")), store.get("dueling.value_b"));
  Tensor advantage = ad::add(ad::matmul(hidden, store.get("dueling.adv_w")), store.get("dueling.adv_b"));
  return dueling_combine(value, advantage);
}

PolicyNetwork::Output PolicyNetwork::step(const ad::ParameterStore& store, const Tensor& observations,
                                          const HeterogeneousAgentGraph& graph, const RecurrentState& state) const {
  if (graph.num_nodes() != observations.rows()) {
    throw ShapeError("policy_step", "graph with " + std::to_string(graph.num_nodes()) + " nodes vs observations " +
                                        ad::to_string(observations.shape()));
  }
  Tensor embedded = encode(store, observations);
  Tensor communicated = comm_.forward(store, graph, embedded);
  RecurrentState next = recurrent_step(store, communicated, state);
  return {dueling_head(store, next.hidden), next};
}

std::size_t masked_argmax(std::span<const double> q, const ActionMask& mask) {
  if (mask.size() != q.size()) throw ShapeError("masked_argmax", "mask and Q sizes differ");
  std::size_t best = q.size();
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (!mask.legal(a)) continue;
    if (best == q.size() || q[a] > best_value) {
      best = a;
      best_value = q[a];
    }
  }
  if (best == q.size()) throw Error("masked_argmax: no legal action");
  return best;
}

EpsilonSchedule::EpsilonSchedule(double eps_min, double eps_max, std::uint64_t decay_steps)
    : eps_min_(eps_min), eps_max_(eps_max), decay_steps_(decay_steps) {
  if (!(eps_min >= 0.0 && eps_min <= eps_max && eps_max <= 1.0)) {
    throw ConfigError("epsilon bounds must satisfy 0 <= eps_min <= eps_max <= 1");
  }
}

double EpsilonSchedule::value(std::uint64_t step) const {
  if (decay_steps_ == 0 || step >= decay_steps_) return eps_min_;
  // Weighted endpoints keep the tabled points (t = 0, D/2, D) exact.
  const auto t = static_cast<double>(step);
  const auto d = static_cast<double>(decay_steps_);
  return (eps_max_ * (d - t) + eps_min_ * t) / d;
}

std::vector<std::size_t> joint_epsilon_greedy(const Tensor& q, std::span<const ActionMask> masks, double epsilon,
                                              Rng& rng) {
  if (q.rank() != 2 || q.rows() != masks.size()) {
    throw ShapeError("joint_epsilon_greedy", ad::to_string(q.shape()) + " with " + std::to_string(masks.size()) +
                                                 " masks");
  }
  for (std::size_t u = 0; u < masks.size(); ++u) {
    if (!masks[u].any()) throw Error("joint_epsilon_greedy: agent " + std::to_string(u) + " has no legal action");
  }
  const bool explore = uniform01(rng) < epsilon;
  std::vector<std::size_t> actions(masks.size());
  const std::size_t n_actions = q.cols();
  for (std::size_t u = 0; u < masks.size(); ++u) {
    if (explore) {
      const auto legal = masks[u].legal_actions();
      actions[u] = legal[uniform_index(rng, legal.size())];
    } else {
      actions[u] = masked_argmax(q.values().subspan(u * n_actions, n_actions), masks[u]);
    }
  }
  return actions;
}

}  // namespace hetcomm::policy
