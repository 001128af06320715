#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "hetcomm/autodiff/ops.hpp"
#include "hetcomm/autodiff/record.hpp"
#include "hetcomm/battle_env.hpp"
#include "hetcomm/harness.hpp"
#include "hetcomm/oracle_envs.hpp"

namespace hetcomm::harness {

namespace {

using ad::Tensor;

// Two recurrent steps of a small three-agent network under a fixed random
// projection of the Q outputs. Returns the worst per-tensor relative error
// ||g - g_fd|| / max(||g||, ||g_fd||, 1e-6) of central differences with
// h = 1e-3, leaving out coordinates whose stencil crosses a LeakyReLU kink.
double network_gradient_error(comm::CommKind kind) {
  policy::NetworkConfig nc;
  nc.input_width = 5;
  nc.num_actions = 4;
  nc.num_classes = 2;
  nc.hidden_width = 6;
  nc.comm.kind = kind;
  const policy::PolicyNetwork net(nc);
  ad::ParameterStore store;
  net.init_parameters(store, 11);

  Rng rng(7);
  std::vector<Tensor> obs;
  for (int t = 0; t < 2; ++t) {
    std::vector<double> v(15);
    for (auto& x : v) x = uniform(rng, -1.0, 1.0);
    obs.push_back(Tensor::from({3, 5}, v));
  }
  std::vector<double> proj(12);
  for (auto& x : proj) x = uniform(rng, -1.0, 1.0);
  const auto graph = HeterogeneousAgentGraph::build(2, {{0}, {1}, {1}}, {{0, 1}, {1, 2}, {2, 0}, {0, 2}});

  auto loss_fn = [&]() {
    auto state = policy::RecurrentState::zeros(3, nc.hidden_width);
    Tensor total;
    for (const auto& o : obs) {
      auto out = net.step(store, o, graph, state);
      state = out.state;
      Tensor s = ad::sum(ad::mul(out.q, Tensor::from({3, 4}, proj)));
      total = total.defined() ? ad::add(total, s) : s;
    }
    return total;
  };
  auto probed = [&](std::uint64_t& signature) {
    ad::KinkProbe probe;
    const double v = loss_fn().item();
    signature = probe.signature();
    return v;
  };

  store.zero_grad();
  ad::ComputationRecord record;
  Tensor loss;
  {
    ad::ActiveRecord active(record);
    loss = loss_fn();
  }
  record.backward(loss);
  std::uint64_t base = 0;
  probed(base);

  const double h = 1e-3;
  double worst = 0.0;
  for (const auto& name : store.names()) {
    Tensor p = store.get(name);
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto values = p.mutable_values();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      std::uint64_t sig_up = 0, sig_down = 0;
      values[i] = saved + h;
      const double up = probed(sig_up);
      values[i] = saved - h;
      const double down = probed(sig_down);
      values[i] = saved;
      if (sig_up != base || sig_down != base) continue;
      const double numeric = (up - down) / (2.0 * h);
      diff2 += (numeric - analytic[i]) * (numeric - analytic[i]);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    worst = std::max(worst, std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-6}));
  }
  return worst;
}

std::vector<std::size_t> random_legal(const env::EnvStepResult& res, Rng& rng) {
  std::vector<std::size_t> actions;
  for (const auto& m : res.masks) {
    const auto legal = m.legal_actions();
    actions.push_back(legal[uniform_index(rng, legal.size())]);
  }
  return actions;
}

std::string battle_trace(const std::string& scenario, std::uint64_t seed) {
  env::BattleEnv battle(env::builtin_scenario(scenario));
  std::ostringstream trace;
  battle.set_trace(&trace);
  Rng rng(seed);
  auto res = battle.reset(seed);
  while (!res.done) res = battle.step(random_legal(res, rng));
  return trace.str();
}

SmokeCheck guarded(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  SmokeCheck c{name, false, ""};
  try {
    auto [ok, detail] = body();
    c.passed = ok;
    c.detail = detail;
  } catch (const std::exception& e) {
    c.detail = std::string("threw: ") + e.what();
  }
  return c;
}

}  // namespace

std::vector<SmokeCheck> run_smoke(const std::filesystem::path& scratch_dir) {
  std::vector<SmokeCheck> checks;
  for (auto kind : {comm::CommKind::none, comm::CommKind::rgcn, comm::CommKind::gat}) {
    checks.push_back(guarded("gradient check (" + std::string(comm::to_string(kind)) + ")", [kind] {
      const double err = network_gradient_error(kind);
      char buf[64];
      std::snprintf(buf, sizeof buf, "max relative error %.2e", err);
      return std::pair{err < 1e-4, std::string(buf)};
    }));
  }

  checks.push_back(guarded("environment determinism", [] {
    for (const auto& id : env::builtin_scenario_ids()) {
      if (battle_trace(id, 3) != battle_trace(id, 3)) return std::pair{false, "trace differs on " + id};
    }
    return std::pair{true, std::string("identical traces on every builtin scenario")};
  }));

  checks.push_back(guarded("mask soundness", [] {
    std::size_t steps = 0;
    for (const auto& id : env::builtin_scenario_ids()) {
      env::BattleEnv battle(env::builtin_scenario(id));
      Rng rng(5);
      for (std::uint64_t ep = 0; ep < 5; ++ep) {
        auto res = battle.reset(ep);
        while (!res.done) {
          res = battle.step(random_legal(res, rng));
          ++steps;
        }
      }
    }
    return std::pair{true, std::to_string(steps) + " random legal steps without error"};
  }));

  checks.push_back(guarded("config round-trip", [] {
    TrainConfig c;
    c.scenario = "s3z5";
    c.comm = comm::CommKind::gat;
    c.seeds = {1, 2, 3};
    c.learning_rate = 1.0 / 3.0;
    const TrainConfig back = parse_config(config_to_text(c));
    return std::pair{back == c && config_to_text(back) == config_to_text(c), std::string("load/dump/load")};
  }));

  checks.push_back(guarded("checkpoint round-trip", [&scratch_dir] {
    std::filesystem::create_directories(scratch_dir);
    TrainConfig c;
    c.scenario = "m3";
    c.hidden_width = 12;
    auto environment = env::make_environment(c.scenario);
    const AgentSetup setup = make_agent_setup(environment->spec(), c);
    const policy::PolicyNetwork net(setup.network);
    ad::ParameterStore store;
    net.init_parameters(store, 9);
    const auto before = evaluate(net, setup, store, *environment, 3, 17);
    const auto path = scratch_dir / "smoke.ckpt";
    save_agent_checkpoint(path, c, store);
    const auto after = run_eval(path, "", 3, 17);
    const bool same = before.win_rate == after.win_rate && before.mean_defeated == after.mean_defeated &&
                      before.mean_reward == after.mean_reward;
    return std::pair{same, std::string("evaluation before save vs after load")};
  }));
  return checks;
}

}  // namespace hetcomm::harness
