#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "hetcomm/autodiff/record.hpp"
#include "hetcomm/battle_env.hpp"
#include "hetcomm/error.hpp"
#include "hetcomm/harness.hpp"
#include "hetcomm/oracle_envs.hpp"

namespace hetcomm::harness {

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kActStream = 2;
constexpr std::uint64_t kSampleStream = 3;
constexpr std::uint64_t kEpisodeStream = 4;
constexpr std::uint64_t kEvalStream = 5;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

AgentSetup make_agent_setup(const env::EnvSpec& spec, const TrainConfig& config) {
  AgentSetup s;
  s.padded_width = spec.max_observation_width;
  s.class_one_hot = config.class_one_hot;
  s.network.input_width = spec.max_observation_width + (config.class_one_hot ? spec.num_classes : 0);
  s.network.num_actions = spec.num_actions;
  s.network.num_classes = spec.num_classes;
  s.network.hidden_width = config.hidden_width;
  s.network.forget_bias = config.forget_bias;
  s.network.comm.kind = config.comm;
  s.network.comm.num_layers = config.comm_layers;
  s.network.comm.width = config.hidden_width;
  s.network.comm.num_bases = config.num_bases;
  s.network.comm.num_heads = config.num_heads;
  s.network.comm.negative_slope = config.negative_slope;
  s.network.comm.attention_slope = config.attention_slope;
  return s;
}

std::vector<double> padded_joint_observation(const env::EnvStepResult& result, const env::EnvSpec& spec,
                                             const AgentSetup& setup) {
  if (result.observations.size() != spec.num_agents) {
    throw ShapeError("padded_joint_observation", std::to_string(result.observations.size()) + " observations for " +
                                                     std::to_string(spec.num_agents) + " agents");
  }
  const std::size_t width = setup.network.input_width;
  std::vector<double> out;
  out.reserve(spec.num_agents * width);
  for (std::size_t u = 0; u < spec.num_agents; ++u) {
    std::optional<policy::ClassOneHot> block;
    if (setup.class_one_hot) block = policy::ClassOneHot{spec.agent_classes[u], spec.num_classes};
    const auto padded = policy::pad_observation(result.observations[u], setup.padded_width, block);
    out.insert(out.end(), padded.values.begin(), padded.values.end());
  }
  return out;
}

EvalSummary evaluate(const policy::PolicyNetwork& network, const AgentSetup& setup, const ad::ParameterStore& store,
                     env::Environment& environment, std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) throw ConfigError("evaluation needs at least one episode");
  ad::NoRecord no_record;
  const env::EnvSpec& spec = environment.spec();
  EvalSummary summary;
  Rng unused(0);
  for (std::size_t k = 0; k < episodes; ++k) {
    env::EnvStepResult res = environment.reset(mix_seed(seed, k));
    auto state = policy::RecurrentState::zeros(spec.num_agents, setup.network.hidden_width);
    EpisodeOutcome outcome;
    while (true) {
      const auto obs = ad::Tensor::from({spec.num_agents, setup.network.input_width},
                                        padded_joint_observation(res, spec, setup));
      auto out = network.step(store, obs, res.graph, state);
      state = out.state;
      const auto actions = policy::joint_epsilon_greedy(out.q, res.masks, 0.0, unused);
      res = environment.step(actions);
      outcome.total_reward += res.reward;
      outcome.length += 1;
      if (res.done) break;
    }
    outcome.won = res.info.won;
    outcome.defeated_enemies = res.info.defeated_enemies;
    summary.episodes.push_back(outcome);
  }
  for (const auto& e : summary.episodes) {
    summary.win_rate += e.won ? 1.0 : 0.0;
    summary.mean_defeated += static_cast<double>(e.defeated_enemies);
    summary.mean_reward += e.total_reward;
  }
  const auto n = static_cast<double>(episodes);
  summary.win_rate /= n;
  summary.mean_defeated /= n;
  summary.mean_reward /= n;
  return summary;
}

std::string metrics_header() {
  return "run_id,seed,env_step,win_rate,mean_defeated,mean_reward,loss,epsilon";
}

std::string format_metric_row(const MetricRow& r) {
  return r.run_id + "," + std::to_string(r.seed) + "," + std::to_string(r.env_step) + "," +
         format_double(r.win_rate) + "," + format_double(r.mean_defeated) + "," + format_double(r.mean_reward) + "," +
         format_double(r.loss) + "," + format_double(r.epsilon);
}

std::vector<MetricRow> read_metrics(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open metrics file: " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != metrics_header()) {
    throw ConfigError("metrics file has an unexpected header: " + path.string());
  }
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw ConfigError("malformed metrics row in " + path.string() + ": " + line);
    MetricRow r;
    try {
      r.run_id = cells[0];
      r.seed = std::stoull(cells[1]);
      r.env_step = std::stoull(cells[2]);
      r.win_rate = std::stod(cells[3]);
      r.mean_defeated = std::stod(cells[4]);
      r.mean_reward = std::stod(cells[5]);
      r.loss = cells[6] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[6]);
      r.epsilon = std::stod(cells[7]);
    } catch (const std::exception&) {
      throw ConfigError("malformed metrics row in " + path.string() + ": " + line);
    }
    rows.push_back(r);
  }
  return rows;
}

void save_agent_checkpoint(const std::filesystem::path& path, const TrainConfig& config,
                           const ad::ParameterStore& store) {
  ad::save_checkpoint(path, store, config_to_text(config));
}

LoadedAgent load_agent_checkpoint(const std::filesystem::path& path) {
  ad::Checkpoint ckpt = ad::load_checkpoint(path);
  TrainConfig config;
  try {
    config = parse_config(ckpt.metadata);
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint metadata is not a training config: " + std::string(e.what()));
  }
  return {config, std::move(ckpt.parameters)};
}

EvalSummary run_eval(const std::filesystem::path& checkpoint, const std::string& scenario, std::size_t episodes,
                     std::uint64_t seed, std::ostream* trace) {
  if (episodes == 0) throw ConfigError("evaluation needs at least one episode");
  LoadedAgent agent = load_agent_checkpoint(checkpoint);
  TrainConfig config = agent.config;
  if (!scenario.empty()) config.scenario = scenario;
  auto environment = env::make_environment(config.scenario);
  const AgentSetup setup = make_agent_setup(environment->spec(), config);
  const policy::PolicyNetwork network(setup.network);

  ad::ParameterStore expected;
  network.init_parameters(expected, 0);
  std::string problems;
  for (const auto& name : expected.names()) {
    if (!agent.store.contains(name)) {
      problems += " " + name + " (missing)";
    } else if (agent.store.get(name).shape() != expected.get(name).shape()) {
      problems += " " + name + " (" + ad::to_string(agent.store.get(name).shape()) + " vs expected " +
                  ad::to_string(expected.get(name).shape()) + ")";
    }
  }
  for (const auto& name : agent.store.names()) {
    if (!expected.contains(name)) problems += " " + name + " (unexpected)";
  }
  if (!problems.empty()) {
    throw CheckpointError("checkpoint does not fit scenario " + config.scenario + ":" + problems);
  }
  if (auto* battle = dynamic_cast<env::BattleEnv*>(environment.get())) battle->set_trace(trace);
  return evaluate(network, setup, agent.store, *environment, episodes, seed);
}

SeedRun run_train_seed(const TrainConfig& config, std::uint64_t seed, const TrainOptions& options) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count(); };

  auto environment = env::make_environment(config.scenario);
  auto eval_env = env::make_environment(config.scenario);
  const env::EnvSpec& spec = environment->spec();
  const AgentSetup setup = make_agent_setup(spec, config);
  const policy::PolicyNetwork network(setup.network);

  ad::ParameterStore store;
  network.init_parameters(store, mix_seed(seed, kInitStream));
  learn::LearnerConfig lc;
  lc.mixer = config.mixer;
  lc.gamma = config.gamma;
  lc.batch_size = config.batch_size;
  lc.target_sync_interval = config.target_sync_interval;
  lc.adam = {config.learning_rate, config.l2_coef, config.adam_beta1, config.adam_beta2, config.adam_epsilon};
  lc.max_grad_norm = config.max_grad_norm;
  learn::Learner learner(network, std::move(store), lc);
  learn::EpisodicReplayBuffer buffer(config.buffer_capacity);
  const policy::EpsilonSchedule schedule(config.eps_min, config.eps_max, config.eps_decay_steps);
  Rng act_rng(mix_seed(seed, kActStream));
  Rng sample_rng(mix_seed(seed, kSampleStream));
  const std::size_t warmup = std::max(config.warmup_episodes, config.batch_size);

  std::error_code ec;
  std::filesystem::create_directories(options.out_dir, ec);
  const std::string id = run_id(config);
  SeedRun run;
  run.seed = seed;
  run.metrics_path = options.out_dir / (id + "_seed" + std::to_string(seed) + ".csv");
  run.checkpoint_path = options.checkpoint_path.value_or(options.out_dir / (id + "_seed" + std::to_string(seed) + ".ckpt"));
  std::filesystem::path timing_path = run.metrics_path;
  timing_path.replace_extension(".timing.csv");
  std::ofstream metrics(run.metrics_path, std::ios::trunc);
  std::ofstream timing(timing_path, std::ios::trunc);
  if (!metrics || !timing) throw ConfigError("cannot write to output directory: " + options.out_dir.string());
  metrics << metrics_header() << '\n' << std::flush;
  timing << "env_step,wall_time\n" << std::flush;

  std::uint64_t env_step = 0;
  std::uint64_t episode_index = 0;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  const std::size_t width = setup.network.input_width;

  while (env_step < config.total_steps) {
    env::EnvStepResult res = environment->reset(mix_seed(mix_seed(seed, kEpisodeStream), episode_index++));
    auto state = policy::RecurrentState::zeros(spec.num_agents, config.hidden_width);
    learn::EpisodeRecord episode;
    episode.num_agents = spec.num_agents;
    episode.observation_width = width;
    bool finished = false;

    while (env_step < config.total_steps) {
      learn::StepRecord step;
      step.observations = padded_joint_observation(res, spec, setup);
      {
        ad::NoRecord no_record;
        const auto obs = ad::Tensor::from({spec.num_agents, width}, step.observations);
        auto out = network.step(learner.online(), obs, res.graph, state);
        state = out.state;
        step.actions = policy::joint_epsilon_greedy(out.q, res.masks, schedule.value(env_step), act_rng);
      }
      env::EnvStepResult next = environment->step(step.actions);
      step.graph = std::move(res.graph);
      step.masks = std::move(res.masks);
      step.alive = std::move(res.alive);
      step.reward = next.reward;
      step.terminal = next.done;
      episode.steps.push_back(std::move(step));
      ++env_step;

      if (buffer.size() >= warmup && env_step % config.train_interval == 0) {
        if (auto m = learner.train_step(buffer, sample_rng)) {
          loss_sum += m->loss;
          ++loss_count;
        }
      }
      if (env_step % config.eval_interval == 0) {
        const EvalSummary ev =
            evaluate(network, setup, learner.online(), *eval_env, config.eval_episodes, mix_seed(seed, kEvalStream));
        MetricRow row;
        row.run_id = id;
        row.seed = seed;
        row.env_step = env_step;
        row.win_rate = ev.win_rate;
        row.mean_defeated = ev.mean_defeated;
        row.mean_reward = ev.mean_reward;
        row.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : std::numeric_limits<double>::quiet_NaN();
        row.epsilon = schedule.value(env_step);
        row.wall_time = elapsed();
        loss_sum = 0.0;
        loss_count = 0;
        metrics << format_metric_row(row) << '\n' << std::flush;
        timing << env_step << ',' << format_double(row.wall_time) << '\n' << std::flush;
        run.rows.push_back(row);
        if (options.on_row) options.on_row(row);
      }
      if (next.done) {
        finished = true;
        break;
      }
      res = std::move(next);
    }
    if (finished) buffer.add(std::move(episode));
  }

  save_agent_checkpoint(run.checkpoint_path, config, learner.online());
  return run;
}

std::vector<SeedRun> run_train(const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  if (options.checkpoint_path && config.seeds.size() != 1) {
    throw ConfigError("an explicit checkpoint path needs exactly one seed");
  }
  std::vector<SeedRun> runs;
  for (auto seed : config.seeds) runs.push_back(run_train_seed(config, seed, options));
  return runs;
}

}  // namespace hetcomm::harness
