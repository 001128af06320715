#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hetcomm/environment.hpp"
#include "hetcomm/random.hpp"

namespace hetcomm::env {

// One-step game. Agent 0 (scout, class 0) privately sees a bit b as a
// one-hot pair and can only wait; agent 1 (fighter, class 1) sees a constant
// and must pick action b. Reward 1 on a match, else 0. With the arc
// scout->fighter a communicating team can reach return 1; without any
// information path the fighter is stuck at 0.5 in expectation.
class SignalGame final : public Environment {
 public:
  static constexpr std::size_t kWait = 2;

  explicit SignalGame(bool with_arc = true);

  const EnvSpec& spec() const override { return spec_; }
  EnvStepResult reset(std::uint64_t seed) override;
  EnvStepResult step(std::span<const std::size_t> joint_action) override;

  int hidden_bit() const noexcept { return bit_; }
  bool with_arc() const noexcept { return with_arc_; }

 private:
  EnvStepResult observe(double reward, bool done) const;

  bool with_arc_;
  EnvSpec spec_;
  int bit_ = 0;
  bool done_ = true;
};

// Single-agent episodic MDP with two states and two actions:
//   s0 --a0--> s1 (reward 0)      s0 --a1--> end (reward 0.5)
//   s1 --a0--> end (reward 1)     s1 --a1--> end (reward 0)
// Observation is the one-hot state; every action is always legal.
class TwoStateMdp final : public Environment {
 public:
  static constexpr std::size_t kStates = 2;
  static constexpr std::size_t kActions = 2;

  struct Transition {
    double reward = 0.0;
    bool terminal = true;
    std::size_t next_state = 0;  // meaningful only when not terminal
  };
  static Transition transition(std::size_t state, std::size_t action);

  TwoStateMdp();

  const EnvSpec& spec() const override { return spec_; }
  EnvStepResult reset(std::uint64_t seed) override;
  EnvStepResult step(std::span<const std::size_t> joint_action) override;

  std::size_t state() const noexcept { return state_; }

 private:
  EnvStepResult observe(double reward, bool done) const;

  EnvSpec spec_;
  std::size_t state_ = 0;
  bool done_ = true;
};

// Builtin battle ids (m3, s3z5, ...), "signal", "signal_noarc",
// "two_state", or a path to a scenario file.
std::unique_ptr<Environment> make_environment(const std::string& id_or_path);

}  // namespace hetcomm::env
