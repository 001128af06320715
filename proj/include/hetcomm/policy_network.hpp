#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hetcomm/action_mask.hpp"
#include "hetcomm/agent_graph.hpp"
#include "hetcomm/autodiff/parameter_store.hpp"
#include "hetcomm/autodiff/tensor.hpp"
#include "hetcomm/comm_layers.hpp"
#include "hetcomm/random.hpp"

namespace hetcomm::policy {

// Fixed-width observation: the raw vector, zeros up to the padded width,
// then (optionally) a one-hot block for the agent's class.
struct PaddedObservation {
  std::vector<double> values;
  std::size_t valid_width = 0;
};

struct ClassOneHot {
  AgentClassId agent_class;
  std::size_t num_classes;
};

PaddedObservation pad_observation(std::span<const double> raw, std::size_t padded_width,
                                  std::optional<ClassOneHot> class_block = std::nullopt);

struct RecurrentState {
  ad::Tensor hidden;  // [agents, width]
  ad::Tensor cell;    // [agents, width]

  static RecurrentState zeros(std::size_t agents, std::size_t width);
};

struct NetworkConfig {
  std::size_t input_width = 0;  // padded observation width incl. class block
  std::size_t num_actions = 0;  // size of the joint action set
  std::size_t num_classes = 1;
  std::size_t hidden_width = 96;
  comm::CommModuleConfig comm;  // comm.width is forced to hidden_width
  double forget_bias = 1.0;
};

// Shared encoder -> communication stack -> LSTM cell -> dueling heads.
// One set of parameters serves every agent of every class.
//
// Parameter names: encoder.{weight,bias}, comm.layer<k>.*,
// rnn.{w_input,w_hidden,bias}, dueling.{value_w,value_b,adv_w,adv_b}.
class PolicyNetwork {
 public:
  explicit PolicyNetwork(NetworkConfig config);

  void init_parameters(ad::ParameterStore& store, std::uint64_t seed) const;

  // tanh(obs W + b); obs is [agents, input_width].
  ad::Tensor encode(const ad::ParameterStore& store, const ad::Tensor& observations) const;
  RecurrentState recurrent_step(const ad::ParameterStore& store, const ad::Tensor& input,
                                const RecurrentState& state) const;
  ad::Tensor dueling_head(const ad::ParameterStore& store, const ad::Tensor& hidden) const;

  struct Output {
    ad::Tensor q;  // [agents, num_actions]
    RecurrentState state;
  };
  Output step(const ad::ParameterStore& store, const ad::Tensor& observations,
              const HeterogeneousAgentGraph& graph, const RecurrentState& state) const;

  const NetworkConfig& config() const noexcept { return config_; }
  const comm::CommStack& comm_stack() const noexcept { return comm_; }

 private:
  NetworkConfig config_;
  comm::CommStack comm_;
};

// Q(a) = V + A(a) - mean_a' A(a'); value is [n,1], advantage [n,A].
ad::Tensor dueling_combine(const ad::Tensor& value, const ad::Tensor& advantage);

// Argmax over legal actions (lowest index wins ties).
std::size_t masked_argmax(std::span<const double> q, const ActionMask& mask);

class EpsilonSchedule {
 public:
  EpsilonSchedule() = default;
  EpsilonSchedule(double eps_min, double eps_max, std::uint64_t decay_steps);

  // eps_max - (eps_max - eps_min) * min(t, decay) / decay
  double value(std::uint64_t step) const;

  double eps_min() const noexcept { return eps_min_; }
  double eps_max() const noexcept { return eps_max_; }
  std::uint64_t decay_steps() const noexcept { return decay_steps_; }

 private:
  double eps_min_ = 0.1;
  double eps_max_ = 0.95;
  std::uint64_t decay_steps_ = 50000;
};

// One coin for the whole team: with probability epsilon every agent samples
// uniformly among its legal actions, otherwise every agent is greedy.
// q is [agents, num_actions].
std::vector<std::size_t> joint_epsilon_greedy(const ad::Tensor& q, std::span<const ActionMask> masks,
                                              double epsilon, Rng& rng);

}  // namespace hetcomm::policy
