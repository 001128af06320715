#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hetcomm/action_mask.hpp"
#include "hetcomm/agent_graph.hpp"

namespace hetcomm::env {

struct StepInfo {
  bool won = false;
  std::size_t defeated_enemies = 0;
};

// Result of reset/step: everything an agent team sees at the new state.
struct EnvStepResult {
  // Raw per-agent observations; widths follow the agent's class.
  std::vector<std::vector<double>> observations;
  HeterogeneousAgentGraph graph;
  std::vector<ActionMask> masks;
  std::vector<std::uint8_t> alive;
  // Shared by every agent.
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct EnvSpec {
  std::string name;
  std::size_t num_agents = 0;
  std::size_t num_classes = 1;
  std::vector<AgentClassId> agent_classes;
  std::vector<std::string> class_names;
  // Raw observation width per agent class and its maximum.
  std::vector<std::size_t> class_observation_width;
  std::size_t max_observation_width = 0;
  std::size_t num_actions = 0;
  std::size_t max_episode_steps = 0;
  std::size_t num_enemies = 0;
};

// Cooperative Dec-POMDP with a shared reward and per-state communication
// graph. Instances are single-threaded; distinct instances are independent.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual EnvStepResult reset(std::uint64_t seed) = 0;
  // Every action must be legal under the current masks.
  virtual EnvStepResult step(std::span<const std::size_t> joint_action) = 0;
};

}  // namespace hetcomm::env
