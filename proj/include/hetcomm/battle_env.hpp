#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetcomm/environment.hpp"

namespace hetcomm::env {

struct UnitSpec {
  double max_hp = 1.0;
  double damage = 0.0;  // per attack; zero for healers
  double heal = 0.0;    // per heal; zero for attackers
  int attack_range = 1;  // also the heal range for healers
  int sight_range = 5;
  int comm_range = 3;
  int move_speed = 1;
  int cooldown = 0;  // steps between attacks

  bool is_healer() const noexcept { return heal > 0.0; }
};

// Shipped class table: fighter, ranged, heavy, healer, artillery.
std::map<std::string, UnitSpec> default_unit_table();

struct RosterEntry {
  std::string unit_class;
  std::size_t count = 0;
};

enum class OpponentPolicy { focus_fire, passive };

struct Position {
  int x = 0;
  int y = 0;
  auto operator<=>(const Position&) const = default;
};

// Chebyshev distance.
int grid_distance(Position a, Position b);

struct ScenarioConfig {
  std::string name;
  int grid_width = 12;
  int grid_height = 12;
  std::vector<RosterEntry> allies;
  std::vector<RosterEntry> enemies;
  std::map<std::string, UnitSpec> units = default_unit_table();
  OpponentPolicy opponent = OpponentPolicy::focus_fire;
  std::size_t max_steps = 60;
  double win_bonus = 10.0;
  double heal_weight = 0.5;
  // Explicit start cells (allies then enemies); seeded placement otherwise.
  std::optional<std::vector<Position>> ally_positions;
  std::optional<std::vector<Position>> enemy_positions;
  std::uint64_t seed = 0;

  void validate() const;
};

// m3, s3z5, c1s3z5, mmm, mmm2.
std::vector<std::string> builtin_scenario_ids();
ScenarioConfig builtin_scenario(std::string_view id);

// Structured-text (JSON) scenario definitions.
ScenarioConfig parse_scenario(const std::string& text);
std::string scenario_to_text(const ScenarioConfig& scenario);
ScenarioConfig load_scenario(const std::filesystem::path& path);

std::string_view to_string(OpponentPolicy policy);
OpponentPolicy parse_opponent_policy(std::string_view text);

enum class Team { allies, enemies };

struct UnitState {
  Team team = Team::allies;
  std::string unit_class;
  Position pos;
  double hp = 0.0;
  int cooldown = 0;
  bool alive = true;
};

struct WorldState {
  std::vector<UnitState> allies;
  std::vector<UnitState> enemies;
  std::size_t step = 0;
};

// Joint action layout shared by all agents:
//   0 no-op, 1 stop, 2 north, 3 south, 4 east, 5 west,
//   6 .. 6+E-1 attack enemy k, then (when the team has a healer class)
//   one heal slot per ally.
enum class Action : std::size_t { noop = 0, stop = 1, north = 2, south = 3, east = 4, west = 5 };
inline constexpr std::size_t kFirstAttackAction = 6;

// Grid battle between an agent team and a scripted opponent team. Moves,
// then attacks and heals, then deaths resolve simultaneously each step;
// lower indices (allies before enemies) win contention for cells.
class BattleEnv final : public Environment {
 public:
  explicit BattleEnv(ScenarioConfig scenario);

  const EnvSpec& spec() const override { return spec_; }
  EnvStepResult reset(std::uint64_t seed) override;
  EnvStepResult step(std::span<const std::size_t> joint_action) override;

  ActionMask available_actions(std::size_t agent) const;
  HeterogeneousAgentGraph comm_graph() const;
  std::vector<double> observe(std::size_t agent) const;

  const WorldState& state() const noexcept { return state_; }
  const ScenarioConfig& scenario() const noexcept { return scenario_; }
  double reward_normalizer() const noexcept { return normalizer_; }
  std::size_t defeated_enemies() const;

  bool has_heal_actions() const noexcept { return has_heal_actions_; }
  std::size_t attack_action(std::size_t enemy) const { return kFirstAttackAction + enemy; }
  std::size_t heal_action(std::size_t ally) const;

  // One line per step with positions, hit points, actions and reward.
  void set_trace(std::ostream* sink) noexcept { trace_ = sink; }

 private:
  const UnitSpec& unit_spec(const UnitState& u) const { return scenario_.units.at(u.unit_class); }
  bool occupied(Position p) const;
  bool in_grid(Position p) const;
  std::vector<std::size_t> opponent_actions() const;
  EnvStepResult observe_all(double reward, bool done, bool won) const;
  void write_trace(std::span<const std::size_t> actions, double reward) const;

  ScenarioConfig scenario_;
  EnvSpec spec_;
  std::vector<std::string> observed_classes_;  // one-hot order in observations
  bool has_heal_actions_ = false;
  WorldState state_;
  double normalizer_ = 1.0;
  bool done_ = true;
  std::ostream* trace_ = nullptr;
};

}  // namespace hetcomm::env
