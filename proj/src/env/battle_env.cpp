#include "hetcomm/battle_env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "hetcomm/error.hpp"
#include "hetcomm/random.hpp"

namespace hetcomm::env {

using nlohmann::json;

std::map<std::string, UnitSpec> default_unit_table() {
  std::map<std::string, UnitSpec> t;
  //                max_hp dmg  heal range sight comm speed cd
  t["fighter"] = {45.0, 6.0, 0.0, 1, 5, 3, 1, 0};
  t["ranged"] = {40.0, 8.0, 0.0, 4, 6, 5, 1, 0};
  t["heavy"] = {80.0, 10.0, 0.0, 1, 5, 3, 1, 0};
  t["healer"] = {50.0, 0.0, 8.0, 3, 6, 6, 1, 0};
  t["artillery"] = {30.0, 12.0, 0.0, 6, 7, 8, 1, 0};
  return t;
}

int grid_distance(Position a, Position b) { return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y)); }

std::string_view to_string(OpponentPolicy policy) {
  return policy == OpponentPolicy::passive ? "passive" : "focus_fire";
}

OpponentPolicy parse_opponent_policy(std::string_view text) {
  if (text == "focus_fire" || text == "focus_fire_nearest") return OpponentPolicy::focus_fire;
  if (text == "passive") return OpponentPolicy::passive;
  throw ConfigError("unknown opponent policy '" + std::string(text) + "'");
}

void ScenarioConfig::validate() const {
  if (grid_width < 2 || grid_height < 2) throw ConfigError("scenario " + name + ": grid too small");
  if (allies.empty() || enemies.empty()) throw ConfigError("scenario " + name + ": rosters must be non-empty");
  if (max_steps == 0) throw ConfigError("scenario " + name + ": max_steps must be positive");
  auto check_roster = [&](const std::vector<RosterEntry>& roster, const char* side) {
    std::size_t total = 0;
    for (const auto& e : roster) {
      if (e.count == 0) throw ConfigError("scenario " + name + ": empty roster entry for " + e.unit_class);
      if (!units.contains(e.unit_class)) {
        throw ConfigError("scenario " + name + ": unknown unit class '" + e.unit_class + "' in " + side);
      }
      total += e.count;
    }
    return total;
  };
  const std::size_t n_allies = check_roster(allies, "allies");
  const std::size_t n_enemies = check_roster(enemies, "enemies");
  for (const auto& [cls, u] : units) {
    if (u.max_hp <= 0.0 || u.damage < 0.0 || u.heal < 0.0 || u.attack_range < 0 || u.sight_range < 0 ||
        u.comm_range < 0 || u.move_speed < 0 || u.cooldown < 0) {
      throw ConfigError("unit class " + cls + ": stats must be non-negative and hit points positive");
    }
    if (u.damage > 0.0 && u.heal > 0.0) throw ConfigError("unit class " + cls + ": cannot both attack and heal");
  }
  if (n_allies + n_enemies > static_cast<std::size_t>(grid_width * grid_height)) {
    throw ConfigError("scenario " + name + ": more units than cells");
  }
  if (ally_positions && ally_positions->size() != n_allies) {
    throw ConfigError("scenario " + name + ": ally position count differs from roster");
  }
  if (enemy_positions && enemy_positions->size() != n_enemies) {
    throw ConfigError("scenario " + name + ": enemy position count differs from roster");
  }
}

std::vector<std::string> builtin_scenario_ids() { return {"m3", "s3z5", "c1s3z5", "mmm", "mmm2"}; }

ScenarioConfig builtin_scenario(std::string_view id) {
  ScenarioConfig s;
  s.name = std::string(id);
  if (id == "m3") {
    s.grid_width = s.grid_height = 12;
    s.allies = {{"ranged", 3}};
    s.enemies = {{"ranged", 3}};
    s.max_steps = 40;
  } else if (id == "s3z5") {
    s.grid_width = s.grid_height = 16;
    s.allies = {{"ranged", 3}, {"fighter", 5}};
    s.enemies = {{"ranged", 3}, {"fighter", 5}};
    s.max_steps = 60;
  } else if (id == "c1s3z5") {
    s.grid_width = s.grid_height = 16;
    s.allies = {{"artillery", 1}, {"ranged", 3}, {"fighter", 5}};
    s.enemies = {{"artillery", 1}, {"ranged", 3}, {"fighter", 5}};
    s.max_steps = 60;
  } else if (id == "mmm") {
    s.grid_width = s.grid_height = 16;
    s.allies = {{"healer", 1}, {"heavy", 2}, {"ranged", 7}};
    s.enemies = {{"healer", 1}, {"heavy", 2}, {"ranged", 7}};
    s.max_steps = 80;
  } else if (id == "mmm2") {
    s.grid_width = s.grid_height = 16;
    s.allies = {{"healer", 1}, {"heavy", 2}, {"ranged", 7}};
    s.enemies = {{"healer", 1}, {"heavy", 3}, {"ranged", 8}};
    s.max_steps = 80;
  } else {
    throw ConfigError("unknown scenario id '" + std::string(id) + "'");
  }
  return s;
}

namespace {

const std::vector<std::string> kScenarioKeys = {"name",  "grid",     "allies",          "enemies",
                                                "units", "opponent", "max_steps",       "reward",
                                                "seed",  "layout"};
const std::vector<std::string> kUnitKeys = {"hp",          "damage",     "heal",       "attack_range",
                                            "sight_range", "comm_range", "move_speed", "cooldown"};

void reject_unknown(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

std::vector<RosterEntry> parse_roster(const json& j) {
  std::vector<RosterEntry> out;
  for (const auto& e : j) out.push_back({e.at("class").get<std::string>(), e.at("count").get<std::size_t>()});
  return out;
}

json roster_json(const std::vector<RosterEntry>& roster) {
  json out = json::array();
  for (const auto& e : roster) out.push_back({{"class", e.unit_class}, {"count", e.count}});
  return out;
}

std::vector<Position> parse_positions(const json& j) {
  std::vector<Position> out;
  for (const auto& p : j) out.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
  return out;
}

json positions_json(const std::vector<Position>& ps) {
  json out = json::array();
  for (const auto& p : ps) out.push_back({p.x, p.y});
  return out;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario file is not valid JSON: ") + e.what());
  }
  try {
    reject_unknown(j, kScenarioKeys, "scenario");
    ScenarioConfig s;
    s.name = j.value("name", std::string("custom"));
    if (j.contains("grid")) {
      s.grid_width = j.at("grid").at(0).get<int>();
      s.grid_height = j.at("grid").at(1).get<int>();
    }
    s.allies = parse_roster(j.at("allies"));
    s.enemies = parse_roster(j.at("enemies"));
    if (j.contains("units")) {
      for (const auto& [cls, overrides] : j.at("units").items()) {
        reject_unknown(overrides, kUnitKeys, "unit class " + cls);
        UnitSpec u = s.units.contains(cls) ? s.units.at(cls) : UnitSpec{};
        u.max_hp = overrides.value("hp", u.max_hp);
        u.damage = overrides.value("damage", u.damage);
        u.heal = overrides.value("heal", u.heal);
        u.attack_range = overrides.value("attack_range", u.attack_range);
        u.sight_range = overrides.value("sight_range", u.sight_range);
        u.comm_range = overrides.value("comm_range", u.comm_range);
        u.move_speed = overrides.value("move_speed", u.move_speed);
        u.cooldown = overrides.value("cooldown", u.cooldown);
        s.units[cls] = u;
      }
    }
    if (j.contains("opponent")) s.opponent = parse_opponent_policy(j.at("opponent").get<std::string>());
    s.max_steps = j.value("max_steps", s.max_steps);
    if (j.contains("reward")) {
      reject_unknown(j.at("reward"), {"win_bonus", "heal_weight"}, "reward");
      s.win_bonus = j.at("reward").value("win_bonus", s.win_bonus);
      s.heal_weight = j.at("reward").value("heal_weight", s.heal_weight);
    }
    s.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("layout")) {
      reject_unknown(j.at("layout"), {"allies", "enemies"}, "layout");
      s.ally_positions = parse_positions(j.at("layout").at("allies"));
      s.enemy_positions = parse_positions(j.at("layout").at("enemies"));
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
}

std::string scenario_to_text(const ScenarioConfig& s) {
  json j;
  j["name"] = s.name;
  j["grid"] = {s.grid_width, s.grid_height};
  j["allies"] = roster_json(s.allies);
  j["enemies"] = roster_json(s.enemies);
  json units = json::object();
  for (const auto& [cls, u] : s.units) {
    units[cls] = {{"hp", u.max_hp},
                  {"damage", u.damage},
                  {"heal", u.heal},
                  {"attack_range", u.attack_range},
                  {"sight_range", u.sight_range},
                  {"comm_range", u.comm_range},
                  {"move_speed", u.move_speed},
                  {"cooldown", u.cooldown}};
  }
  j["units"] = units;
  j["opponent"] = std::string(to_string(s.opponent));
  j["max_steps"] = s.max_steps;
  j["reward"] = {{"win_bonus", s.win_bonus}, {"heal_weight", s.heal_weight}};
  j["seed"] = s.seed;
  if (s.ally_positions && s.enemy_positions) {
    j["layout"] = {{"allies", positions_json(*s.ally_positions)}, {"enemies", positions_json(*s.enemy_positions)}};
  }
  return j.dump(2);
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open scenario file: " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_scenario(buf.str());
}

namespace {

std::vector<UnitState> expand_roster(const std::vector<RosterEntry>& roster, Team team) {
  std::vector<UnitState> units;
  for (const auto& e : roster) {
    for (std::size_t i = 0; i < e.count; ++i) {
      UnitState u;
      u.team = team;
      u.unit_class = e.unit_class;
      units.push_back(u);
    }
  }
  return units;
}

// Slots of a team block facing the centre line; side is -1 (left) or +1.
std::vector<Position> block_slots(std::size_t n, int side, int grid_w, int grid_h, int row_shift) {
  const int rows = std::max(1, std::min(static_cast<int>(n), std::min(6, grid_h - 2)));
  const int cx = grid_w / 2;
  const int cy = grid_h / 2;
  std::vector<Position> out;
  for (std::size_t k = 0; k < n; ++k) {
    const int col = static_cast<int>(k) / rows;
    const int row = static_cast<int>(k) % rows;
    int x = side < 0 ? cx - 3 - col : cx + 2 + col;
    int y = cy - rows / 2 + row + row_shift;
    x = std::clamp(x, 0, grid_w - 1);
    y = std::clamp(y, 0, grid_h - 1);
    out.push_back({x, y});
  }
  return out;
}

int sign(int v) { return (v > 0) - (v < 0); }

struct Intent {
  enum class Kind { none, move, attack, heal } kind = Kind::none;
  int dx = 0;
  int dy = 0;
  std::size_t target = 0;  // attack: index in opposing team; heal: index in own team
};

}  // namespace

BattleEnv::BattleEnv(ScenarioConfig scenario) : scenario_(std::move(scenario)) {
  scenario_.validate();
  spec_.name = scenario_.name;
  std::vector<std::string> ally_classes;
  for (const auto& e : scenario_.allies) {
    if (std::find(ally_classes.begin(), ally_classes.end(), e.unit_class) == ally_classes.end()) {
      ally_classes.push_back(e.unit_class);
    }
  }
  observed_classes_ = ally_classes;
  for (const auto& e : scenario_.enemies) {
    if (std::find(observed_classes_.begin(), observed_classes_.end(), e.unit_class) == observed_classes_.end()) {
      observed_classes_.push_back(e.unit_class);
    }
  }
  spec_.class_names = ally_classes;
  spec_.num_classes = ally_classes.size();
  for (const auto& e : scenario_.allies) {
    const auto cls = static_cast<std::size_t>(
        std::find(ally_classes.begin(), ally_classes.end(), e.unit_class) - ally_classes.begin());
    for (std::size_t i = 0; i < e.count; ++i) spec_.agent_classes.push_back({cls});
  }
  spec_.num_agents = spec_.agent_classes.size();
  for (const auto& e : scenario_.enemies) spec_.num_enemies += e.count;
  for (const auto& cls : ally_classes) has_heal_actions_ = has_heal_actions_ || scenario_.units.at(cls).is_healer();

  const std::size_t slot_width = 4 + observed_classes_.size();
  const std::size_t obs_width = 4 + (spec_.num_agents - 1 + spec_.num_enemies) * slot_width;
  spec_.class_observation_width.assign(spec_.num_classes, obs_width);
  spec_.max_observation_width = obs_width;
  spec_.num_actions = kFirstAttackAction + spec_.num_enemies + (has_heal_actions_ ? spec_.num_agents : 0);
  spec_.max_episode_steps = scenario_.max_steps;
}

std::size_t BattleEnv::heal_action(std::size_t ally) const {
  if (!has_heal_actions_) throw EnvError("scenario has no heal actions");
  return kFirstAttackAction + spec_.num_enemies + ally;
}

bool BattleEnv::in_grid(Position p) const {
  return p.x >= 0 && p.y >= 0 && p.x < scenario_.grid_width && p.y < scenario_.grid_height;
}

bool BattleEnv::occupied(Position p) const {
  auto hit = [p](const UnitState& u) { return u.alive && u.pos == p; };
  return std::any_of(state_.allies.begin(), state_.allies.end(), hit) ||
         std::any_of(state_.enemies.begin(), state_.enemies.end(), hit);
}

std::size_t BattleEnv::defeated_enemies() const {
  return static_cast<std::size_t>(
      std::count_if(state_.enemies.begin(), state_.enemies.end(), [](const UnitState& u) { return !u.alive; }));
}

EnvStepResult BattleEnv::reset(std::uint64_t seed) {
  state_ = WorldState{};
  state_.allies = expand_roster(scenario_.allies, Team::allies);
  state_.enemies = expand_roster(scenario_.enemies, Team::enemies);

  Rng rng(mix_seed(seed, scenario_.seed));
  auto place = [&](std::vector<UnitState>& team, const std::optional<std::vector<Position>>& fixed, int side) {
    std::vector<Position> slots;
    if (fixed) {
      slots = *fixed;
    } else {
      const int shift = static_cast<int>(uniform_index(rng, 3)) - 1;
      slots = block_slots(team.size(), side, scenario_.grid_width, scenario_.grid_height, shift);
      std::shuffle(slots.begin(), slots.end(), rng);
    }
    for (std::size_t i = 0; i < team.size(); ++i) {
      team[i].pos = slots[i];
      team[i].hp = unit_spec(team[i]).max_hp;
    }
  };
  place(state_.allies, scenario_.ally_positions, -1);
  place(state_.enemies, scenario_.enemy_positions, +1);

  std::vector<Position> all;
  for (const auto& u : state_.allies) all.push_back(u.pos);
  for (const auto& u : state_.enemies) all.push_back(u.pos);
  for (const auto& p : all) {
    if (!in_grid(p)) throw ConfigError("scenario " + scenario_.name + ": start position outside the grid");
  }
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
    throw ConfigError("scenario " + scenario_.name + ": two units share a start cell");
  }

  normalizer_ = 0.0;
  for (const auto& u : state_.enemies) normalizer_ += u.hp;
  done_ = false;
  return observe_all(0.0, false, false);
}

ActionMask BattleEnv::available_actions(std::size_t agent) const {
  if (agent >= spec_.num_agents) throw EnvError("agent " + std::to_string(agent) + " out of range");
  const UnitState& self = state_.allies[agent];
  if (!self.alive) return ActionMask::only(spec_.num_actions, static_cast<std::size_t>(Action::noop));

  ActionMask mask(spec_.num_actions);
  mask.set(static_cast<std::size_t>(Action::noop));
  mask.set(static_cast<std::size_t>(Action::stop));
  const UnitSpec& us = unit_spec(self);
  const std::pair<Action, Position> moves[] = {{Action::north, {0, -1}},
                                               {Action::south, {0, 1}},
                                               {Action::east, {1, 0}},
                                               {Action::west, {-1, 0}}};
  if (us.move_speed > 0) {
    for (const auto& [action, d] : moves) {
      const Position next{self.pos.x + d.x, self.pos.y + d.y};
      if (in_grid(next) && !occupied(next)) mask.set(static_cast<std::size_t>(action));
    }
  }
  if (us.is_healer()) {
    for (std::size_t j = 0; j < state_.allies.size(); ++j) {
      const UnitState& other = state_.allies[j];
      if (j == agent || !other.alive || other.hp >= unit_spec(other).max_hp) continue;
      if (grid_distance(self.pos, other.pos) <= us.attack_range) mask.set(heal_action(j));
    }
  } else if (us.damage > 0.0) {
    for (std::size_t k = 0; k < state_.enemies.size(); ++k) {
      const UnitState& enemy = state_.enemies[k];
      if (enemy.alive && grid_distance(self.pos, enemy.pos) <= us.attack_range) mask.set(attack_action(k));
    }
  }
  return mask;
}

HeterogeneousAgentGraph BattleEnv::comm_graph() const {
  std::vector<Arc> arcs;
  for (std::size_t u = 0; u < state_.allies.size(); ++u) {
    const UnitState& from = state_.allies[u];
    if (!from.alive) continue;
    const int range = unit_spec(from).comm_range;
    for (std::size_t v = 0; v < state_.allies.size(); ++v) {
      const UnitState& to = state_.allies[v];
      if (u == v || !to.alive) continue;
      if (grid_distance(from.pos, to.pos) <= range) arcs.push_back({u, v});
    }
  }
  return HeterogeneousAgentGraph::build(spec_.num_classes, spec_.agent_classes, std::move(arcs));
}

std::vector<double> BattleEnv::observe(std::size_t agent) const {
  if (agent >= spec_.num_agents) throw EnvError("agent " + std::to_string(agent) + " out of range");
  std::vector<double> obs(spec_.max_observation_width, 0.0);
  const UnitState& self = state_.allies[agent];
  if (!self.alive) return obs;
  const UnitSpec& us = unit_spec(self);
  obs[0] = self.hp / us.max_hp;
  obs[1] = static_cast<double>(self.pos.x) / static_cast<double>(scenario_.grid_width - 1);
  obs[2] = static_cast<double>(self.pos.y) / static_cast<double>(scenario_.grid_height - 1);
  obs[3] = self.cooldown > 0 ? 1.0 : 0.0;

  const std::size_t slot_width = 4 + observed_classes_.size();
  const double sight = std::max(1, us.sight_range);
  std::size_t slot = 0;
  auto write_slot = [&](const UnitState& other) {
    const std::size_t base = 4 + slot * slot_width;
    ++slot;
    if (!other.alive || grid_distance(self.pos, other.pos) > us.sight_range) return;
    obs[base] = 1.0;
    obs[base + 1] = static_cast<double>(other.pos.x - self.pos.x) / sight;
    obs[base + 2] = static_cast<double>(other.pos.y - self.pos.y) / sight;
    obs[base + 3] = other.hp / unit_spec(other).max_hp;
    const auto cls = static_cast<std::size_t>(
        std::find(observed_classes_.begin(), observed_classes_.end(), other.unit_class) - observed_classes_.begin());
    obs[base + 4 + cls] = 1.0;
  };
  for (std::size_t j = 0; j < state_.allies.size(); ++j) {
    if (j != agent) write_slot(state_.allies[j]);
  }
  for (const auto& enemy : state_.enemies) write_slot(enemy);
  return obs;
}

EnvStepResult BattleEnv::observe_all(double reward, bool done, bool won) const {
  EnvStepResult r;
  for (std::size_t u = 0; u < spec_.num_agents; ++u) {
    r.observations.push_back(observe(u));
    r.masks.push_back(available_actions(u));
    r.alive.push_back(state_.allies[u].alive ? 1 : 0);
  }
  r.graph = comm_graph();
  r.reward = reward;
  r.done = done;
  r.info.won = won;
  r.info.defeated_enemies = defeated_enemies();
  return r;
}

std::vector<std::size_t> BattleEnv::opponent_actions() const {
  // Encoded with the shared layout from the enemy side: attack slot k is
  // ally k.
  const std::size_t n_enemies = state_.enemies.size();
  std::vector<std::size_t> actions(n_enemies, static_cast<std::size_t>(Action::noop));
  if (scenario_.opponent == OpponentPolicy::passive) return actions;

  for (std::size_t k = 0; k < n_enemies; ++k) {
    const UnitState& self = state_.enemies[k];
    if (!self.alive) continue;
    const UnitSpec& us = unit_spec(self);
    std::optional<std::size_t> chosen;
    Position goal = self.pos;
    if (us.is_healer()) {
      // Scripted healers escort the nearest teammate without healing, so
      // the opposing team's total hit points never increase.
      int nearest = -1;
      int nearest_d = 1 << 20;
      for (std::size_t j = 0; j < n_enemies; ++j) {
        const UnitState& mate = state_.enemies[j];
        if (j == k || !mate.alive) continue;
        const int d = grid_distance(self.pos, mate.pos);
        if (d < nearest_d) {
          nearest_d = d;
          nearest = static_cast<int>(j);
        }
      }
      if (nearest >= 0 && nearest_d > 1) goal = state_.enemies[static_cast<std::size_t>(nearest)].pos;
    } else {
      // Focus fire: lowest hit points among allies in range, else close in
      // on the nearest ally.
      double lowest = 0.0;
      int nearest = -1;
      int nearest_d = 1 << 20;
      for (std::size_t a = 0; a < state_.allies.size(); ++a) {
        const UnitState& target = state_.allies[a];
        if (!target.alive) continue;
        const int d = grid_distance(self.pos, target.pos);
        if (d <= us.attack_range && (!chosen || target.hp < lowest)) {
          lowest = target.hp;
          chosen = kFirstAttackAction + a;
        }
        if (d < nearest_d) {
          nearest_d = d;
          nearest = static_cast<int>(a);
        }
      }
      if (!chosen && nearest >= 0) goal = state_.allies[static_cast<std::size_t>(nearest)].pos;
    }
    if (chosen) {
      actions[k] = *chosen;
    } else if (goal != self.pos && us.move_speed > 0) {
      const int dx = goal.x - self.pos.x;
      const int dy = goal.y - self.pos.y;
      const bool horizontal = std::abs(dx) >= std::abs(dy);
      const Position primary = horizontal ? Position{self.pos.x + sign(dx), self.pos.y}
                                          : Position{self.pos.x, self.pos.y + sign(dy)};
      const Position secondary = horizontal ? Position{self.pos.x, self.pos.y + sign(dy)}
                                            : Position{self.pos.x + sign(dx), self.pos.y};
      auto dir_action = [&](Position p) {
        if (p.x > self.pos.x) return Action::east;
        if (p.x < self.pos.x) return Action::west;
        if (p.y < self.pos.y) return Action::north;
        return Action::south;
      };
      if (primary != self.pos && in_grid(primary) && !occupied(primary)) {
        actions[k] = static_cast<std::size_t>(dir_action(primary));
      } else if (secondary != self.pos && in_grid(secondary) && !occupied(secondary)) {
        actions[k] = static_cast<std::size_t>(dir_action(secondary));
      }
    }
  }
  return actions;
}

EnvStepResult BattleEnv::step(std::span<const std::size_t> joint_action) {
  if (done_) throw EnvError("step called on a finished episode; call reset first");
  if (joint_action.size() != spec_.num_agents) {
    throw EnvError("expected " + std::to_string(spec_.num_agents) + " actions, got " +
                   std::to_string(joint_action.size()));
  }
  for (std::size_t u = 0; u < spec_.num_agents; ++u) {
    if (!available_actions(u).legal(joint_action[u])) {
      throw EnvError("illegal action " + std::to_string(joint_action[u]) + " for agent " + std::to_string(u));
    }
  }
  const std::vector<std::size_t> enemy_actions = opponent_actions();

  const std::size_t n_allies = state_.allies.size();
  const std::size_t n_enemies = state_.enemies.size();
  // Decode both teams' actions; attack targets index the opposing team,
  // heal targets the own team.
  auto decode = [](std::size_t action, std::size_t n_opponents) {
    Intent it;
    switch (action) {
      case static_cast<std::size_t>(Action::north): it = {Intent::Kind::move, 0, -1, 0}; break;
      case static_cast<std::size_t>(Action::south): it = {Intent::Kind::move, 0, 1, 0}; break;
      case static_cast<std::size_t>(Action::east): it = {Intent::Kind::move, 1, 0, 0}; break;
      case static_cast<std::size_t>(Action::west): it = {Intent::Kind::move, -1, 0, 0}; break;
      default:
        if (action >= kFirstAttackAction + n_opponents) {
          it = {Intent::Kind::heal, 0, 0, action - kFirstAttackAction - n_opponents};
        } else if (action >= kFirstAttackAction) {
          it = {Intent::Kind::attack, 0, 0, action - kFirstAttackAction};
        }
    }
    return it;
  };
  std::vector<Intent> ally_intent(n_allies), enemy_intent(n_enemies);
  for (std::size_t u = 0; u < n_allies; ++u) ally_intent[u] = decode(joint_action[u], n_enemies);
  for (std::size_t k = 0; k < n_enemies; ++k) enemy_intent[k] = decode(enemy_actions[k], n_allies);

  // Moves: allies by index, then enemies by index.
  auto apply_moves = [&](std::vector<UnitState>& team, const std::vector<Intent>& intents) {
    for (std::size_t i = 0; i < team.size(); ++i) {
      UnitState& unit = team[i];
      if (!unit.alive || intents[i].kind != Intent::Kind::move) continue;
      for (int s = 0; s < unit_spec(unit).move_speed; ++s) {
        const Position next{unit.pos.x + intents[i].dx, unit.pos.y + intents[i].dy};
        if (!in_grid(next) || occupied(next)) break;
        unit.pos = next;
      }
    }
  };
  apply_moves(state_.allies, ally_intent);
  apply_moves(state_.enemies, enemy_intent);

  // Attacks and heals against post-move positions; all land simultaneously.
  std::vector<double> ally_damage(n_allies, 0.0), ally_heal(n_allies, 0.0);
  std::vector<double> enemy_damage(n_enemies, 0.0), enemy_heal(n_enemies, 0.0);
  auto apply_combat = [&](std::vector<UnitState>& team, const std::vector<Intent>& intents,
                          std::vector<UnitState>& opponents, std::vector<double>& damage_to_opponents,
                          std::vector<double>& heal_to_team) {
    for (std::size_t i = 0; i < team.size(); ++i) {
      UnitState& unit = team[i];
      const Intent& it = intents[i];
      if (!unit.alive || (it.kind != Intent::Kind::attack && it.kind != Intent::Kind::heal)) continue;
      const UnitSpec& us = unit_spec(unit);
      if (unit.cooldown > 0) continue;
      if (it.kind == Intent::Kind::attack) {
        const UnitState& target = opponents[it.target];
        if (!target.alive || grid_distance(unit.pos, target.pos) > us.attack_range) continue;
        damage_to_opponents[it.target] += us.damage;
      } else {
        const UnitState& target = team[it.target];
        if (!target.alive || grid_distance(unit.pos, target.pos) > us.attack_range) continue;
        heal_to_team[it.target] += us.heal;
      }
      unit.cooldown = us.cooldown + 1;
    }
  };
  apply_combat(state_.allies, ally_intent, state_.enemies, enemy_damage, ally_heal);
  apply_combat(state_.enemies, enemy_intent, state_.allies, ally_damage, enemy_heal);

  double dealt = 0.0;
  double healed = 0.0;
  auto resolve = [&](std::vector<UnitState>& team, const std::vector<double>& damage, const std::vector<double>& heal,
                     double* damage_sum, double* heal_sum) {
    for (std::size_t i = 0; i < team.size(); ++i) {
      UnitState& unit = team[i];
      if (!unit.alive) continue;
      const double after_damage = std::max(0.0, unit.hp - damage[i]);
      if (damage_sum) *damage_sum += unit.hp - after_damage;
      if (after_damage <= 0.0) {
        unit.hp = 0.0;
        unit.alive = false;
        continue;
      }
      const double after_heal = std::min(unit_spec(unit).max_hp, after_damage + heal[i]);
      if (heal_sum) *heal_sum += after_heal - after_damage;
      unit.hp = after_heal;
    }
  };
  resolve(state_.enemies, enemy_damage, enemy_heal, &dealt, nullptr);
  resolve(state_.allies, ally_damage, ally_heal, nullptr, &healed);

  for (auto* team : {&state_.allies, &state_.enemies}) {
    for (auto& unit : *team) {
      if (unit.cooldown > 0) unit.cooldown -= 1;
    }
  }
  state_.step += 1;

  const bool enemies_dead =
      std::none_of(state_.enemies.begin(), state_.enemies.end(), [](const UnitState& u) { return u.alive; });
  const bool allies_dead =
      std::none_of(state_.allies.begin(), state_.allies.end(), [](const UnitState& u) { return u.alive; });
  const bool won = enemies_dead;
  double reward = (dealt + scenario_.heal_weight * healed) / normalizer_;
  if (won) reward += scenario_.win_bonus;
  done_ = enemies_dead || allies_dead || state_.step >= scenario_.max_steps;

  write_trace(joint_action, reward);
  return observe_all(reward, done_, won);
}

void BattleEnv::write_trace(std::span<const std::size_t> actions, double reward) const {
  if (trace_ == nullptr) return;
  std::ostream& os = *trace_;
  os << "step " << state_.step << " reward " << reward << " actions";
  for (auto a : actions) os << ' ' << a;
  os << " units";
  auto write_team = [&](const std::vector<UnitState>& team, char tag) {
    for (std::size_t i = 0; i < team.size(); ++i) {
      os << ' ' << tag << i << ':' << team[i].pos.x << ',' << team[i].pos.y << ',' << team[i].hp;
    }
  };
  write_team(state_.allies, 'a');
  write_team(state_.enemies, 'e');
  os << '\n';
}

}  // namespace hetcomm::env
