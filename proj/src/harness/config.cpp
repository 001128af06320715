#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hetcomm/error.hpp"
#include "hetcomm/harness.hpp"

namespace hetcomm::harness {

using nlohmann::json;

void TrainConfig::validate() const {
  if (scenario.empty()) throw ConfigError("scenario must be set");
  if (total_steps == 0) throw ConfigError("total_steps must be positive");
  if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
  if (eval_episodes == 0) throw ConfigError("eval_episodes must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(learning_rate >= 0.0) || !(l2_coef >= 0.0)) throw ConfigError("learning rate and L2 must be non-negative");
  if (!(eps_min >= 0.0 && eps_min <= eps_max && eps_max <= 1.0)) {
    throw ConfigError("epsilon bounds must satisfy 0 <= eps_min <= eps_max <= 1");
  }
  if (target_sync_interval == 0) throw ConfigError("target_sync_interval must be positive");
  if (buffer_capacity == 0 || batch_size == 0) throw ConfigError("buffer capacity and batch size must be positive");
  if (buffer_capacity < batch_size) throw ConfigError("buffer capacity is smaller than the batch size");
  if (train_interval == 0) throw ConfigError("train_interval must be positive");
  if (hidden_width == 0) throw ConfigError("hidden_width must be positive");
  if (comm == comm::CommKind::gat && (num_heads == 0 || hidden_width % num_heads != 0)) {
    throw ConfigError("hidden_width must be divisible by num_heads for gat");
  }
  if (comm == comm::CommKind::rgcn && num_bases == 0) throw ConfigError("num_bases must be positive for rgcn");
}

namespace {

json to_json(const TrainConfig& c) {
  return json{{"scenario", c.scenario},
              {"comm", std::string(comm::to_string(c.comm))},
              {"mixer", std::string(learn::to_string(c.mixer))},
              {"total_steps", c.total_steps},
              {"eval_interval", c.eval_interval},
              {"eval_episodes", c.eval_episodes},
              {"seeds", c.seeds},
              {"gamma", c.gamma},
              {"learning_rate", c.learning_rate},
              {"l2_coef", c.l2_coef},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_epsilon", c.adam_epsilon},
              {"eps_min", c.eps_min},
              {"eps_max", c.eps_max},
              {"eps_decay_steps", c.eps_decay_steps},
              {"target_sync_interval", c.target_sync_interval},
              {"buffer_capacity", c.buffer_capacity},
              {"batch_size", c.batch_size},
              {"warmup_episodes", c.warmup_episodes},
              {"train_interval", c.train_interval},
              {"max_grad_norm", c.max_grad_norm},
              {"hidden_width", c.hidden_width},
              {"comm_layers", c.comm_layers},
              {"num_bases", c.num_bases},
              {"num_heads", c.num_heads},
              {"negative_slope", c.negative_slope},
              {"attention_slope", c.attention_slope},
              {"forget_bias", c.forget_bias},
              {"class_one_hot", c.class_one_hot}};
}

template <typename T>
void read(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

std::string config_to_text(const TrainConfig& config) { return to_json(config).dump(2) + "\n"; }

TrainConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const json known = to_json(TrainConfig{});
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  TrainConfig c;
  try {
    read(j, "scenario", c.scenario);
    if (j.contains("comm")) c.comm = comm::parse_comm_kind(j.at("comm").get<std::string>());
    if (j.contains("mixer")) c.mixer = learn::parse_mixer_kind(j.at("mixer").get<std::string>());
    read(j, "total_steps", c.total_steps);
    read(j, "eval_interval", c.eval_interval);
    read(j, "eval_episodes", c.eval_episodes);
    read(j, "seeds", c.seeds);
    read(j, "gamma", c.gamma);
    read(j, "learning_rate", c.learning_rate);
    read(j, "l2_coef", c.l2_coef);
    read(j, "adam_beta1", c.adam_beta1);
    read(j, "adam_beta2", c.adam_beta2);
    read(j, "adam_epsilon", c.adam_epsilon);
    read(j, "eps_min", c.eps_min);
    read(j, "eps_max", c.eps_max);
    read(j, "eps_decay_steps", c.eps_decay_steps);
    read(j, "target_sync_interval", c.target_sync_interval);
    read(j, "buffer_capacity", c.buffer_capacity);
    read(j, "batch_size", c.batch_size);
    read(j, "warmup_episodes", c.warmup_episodes);
    read(j, "train_interval", c.train_interval);
    read(j, "max_grad_norm", c.max_grad_norm);
    read(j, "hidden_width", c.hidden_width);
    read(j, "comm_layers", c.comm_layers);
    read(j, "num_bases", c.num_bases);
    read(j, "num_heads", c.num_heads);
    read(j, "negative_slope", c.negative_slope);
    read(j, "attention_slope", c.attention_slope);
    read(j, "forget_bias", c.forget_bias);
    read(j, "class_one_hot", c.class_one_hot);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

void save_config(const std::filesystem::path& path, const TrainConfig& config) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write config file: " + path.string());
  os << config_to_text(config);
}

std::string run_id(const TrainConfig& config) {
  std::string scen = std::filesystem::path(config.scenario).stem().string();
  std::replace_if(scen.begin(), scen.end(), [](char ch) { return ch == '/' || ch == '\\' || ch == '.'; }, '-');
  return scen + "_" + std::string(learn::to_string(config.mixer)) + "_" + std::string(comm::to_string(config.comm));
}

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("HETCOMM_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "runs";
}

}  // namespace hetcomm::harness
