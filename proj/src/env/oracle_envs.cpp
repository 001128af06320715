#include "hetcomm/oracle_envs.hpp"

#include <filesystem>

#include "hetcomm/battle_env.hpp"
#include "hetcomm/error.hpp"

namespace hetcomm::env {

SignalGame::SignalGame(bool with_arc) : with_arc_(with_arc) {
  spec_.name = with_arc ? "signal" : "signal_noarc";
  spec_.num_agents = 2;
  spec_.num_classes = 2;
  spec_.agent_classes = {{0}, {1}};
  spec_.class_names = {"scout", "fighter"};
  spec_.class_observation_width = {2, 1};
  spec_.max_observation_width = 2;
  spec_.num_actions = 3;
  spec_.max_episode_steps = 1;
  spec_.num_enemies = 0;
}

EnvStepResult SignalGame::observe(double reward, bool done) const {
  EnvStepResult r;
  r.observations = {{bit_ == 0 ? 1.0 : 0.0, bit_ == 1 ? 1.0 : 0.0}, {1.0}};
  std::vector<Arc> arcs;
  if (with_arc_) arcs.push_back({0, 1});
  r.graph = HeterogeneousAgentGraph::build(2, spec_.agent_classes, std::move(arcs));
  ActionMask fighter(3);
  fighter.set(0);
  fighter.set(1);
  r.masks = {ActionMask::only(3, kWait), fighter};
  r.alive = {1, 1};
  r.reward = reward;
  r.done = done;
  r.info.won = done && reward > 0.0;
  return r;
}

EnvStepResult SignalGame::reset(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5167ULL));
  bit_ = uniform01(rng) < 0.5 ? 0 : 1;
  done_ = false;
  return observe(0.0, false);
}

EnvStepResult SignalGame::step(std::span<const std::size_t> joint_action) {
  if (done_) throw EnvError("step called on a finished episode; call reset first");
  if (joint_action.size() != 2) throw EnvError("signal game expects 2 actions");
  if (joint_action[0] != kWait) throw EnvError("illegal action for the scout");
  if (joint_action[1] > 1) throw EnvError("illegal action for the fighter");
  done_ = true;
  return observe(static_cast<int>(joint_action[1]) == bit_ ? 1.0 : 0.0, true);
}

TwoStateMdp::Transition TwoStateMdp::transition(std::size_t state, std::size_t action) {
  if (state >= kStates || action >= kActions) throw EnvError("two-state MDP: state or action out of range");
  if (state == 0) return action == 0 ? Transition{0.0, false, 1} : Transition{0.5, true, 0};
  return action == 0 ? Transition{1.0, true, 0} : Transition{0.0, true, 0};
}

TwoStateMdp::TwoStateMdp() {
  spec_.name = "two_state";
  spec_.num_agents = 1;
  spec_.num_classes = 1;
  spec_.agent_classes = {{0}};
  spec_.class_names = {"agent"};
  spec_.class_observation_width = {kStates};
  spec_.max_observation_width = kStates;
  spec_.num_actions = kActions;
  spec_.max_episode_steps = 2;
}

EnvStepResult TwoStateMdp::observe(double reward, bool done) const {
  EnvStepResult r;
  std::vector<double> obs(kStates, 0.0);
  obs[state_] = 1.0;
  r.observations = {obs};
  r.graph = HeterogeneousAgentGraph::build(1, spec_.agent_classes, {});
  r.masks = {ActionMask::all(kActions)};
  r.alive = {1};
  r.reward = reward;
  r.done = done;
  return r;
}

EnvStepResult TwoStateMdp::reset(std::uint64_t) {
  state_ = 0;
  done_ = false;
  return observe(0.0, false);
}

EnvStepResult TwoStateMdp::step(std::span<const std::size_t> joint_action) {
  if (done_) throw EnvError("step called on a finished episode; call reset first");
  if (joint_action.size() != 1) throw EnvError("two-state MDP expects 1 action");
  const Transition t = transition(state_, joint_action[0]);
  done_ = t.terminal;
  if (!t.terminal) state_ = t.next_state;
  return observe(t.reward, t.terminal);
}

std::unique_ptr<Environment> make_environment(const std::string& id_or_path) {
  if (id_or_path == "signal") return std::make_unique<SignalGame>(true);
  if (id_or_path == "signal_noarc") return std::make_unique<SignalGame>(false);
  if (id_or_path == "two_state") return std::make_unique<TwoStateMdp>();
  for (const auto& id : builtin_scenario_ids()) {
    if (id == id_or_path) return std::make_unique<BattleEnv>(builtin_scenario(id));
  }
  if (std::filesystem::exists(id_or_path)) return std::make_unique<BattleEnv>(load_scenario(id_or_path));
  throw ConfigError("unknown scenario '" + id_or_path + "'");
}

}  // namespace hetcomm::env
