#pragma once

#include <functional>

#include "hetcomm/environment.hpp"
#include "hetcomm/harness.hpp"
#include "hetcomm/learner.hpp"

namespace hetcomm::testing {

using ActionChooser = std::function<std::vector<std::size_t>(const env::EnvStepResult&)>;

// Plays one episode and packs it the way the trainer stores it.
inline learn::EpisodeRecord record_episode(env::Environment& environment, const harness::AgentSetup& setup,
                                           std::uint64_t seed, const ActionChooser& choose) {
  const auto& spec = environment.spec();
  learn::EpisodeRecord ep;
  ep.num_agents = spec.num_agents;
  ep.observation_width = setup.network.input_width;
  auto res = environment.reset(seed);
  while (!res.done) {
    learn::StepRecord s;
    s.observations = harness::padded_joint_observation(res, spec, setup);
    s.graph = res.graph;
    s.masks = res.masks;
    s.alive = res.alive;
    s.actions = choose(res);
    res = environment.step(s.actions);
    s.reward = res.reward;
    s.terminal = res.done;
    ep.steps.push_back(std::move(s));
  }
  return ep;
}

inline ActionChooser random_legal_actions(Rng& rng) {
  return [&rng](const env::EnvStepResult& res) {
    std::vector<std::size_t> actions;
    for (const auto& m : res.masks) {
      const auto legal = m.legal_actions();
      actions.push_back(legal[uniform_index(rng, legal.size())]);
    }
    return actions;
  };
}

}  // namespace hetcomm::testing
