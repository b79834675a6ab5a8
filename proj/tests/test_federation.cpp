#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <thread>

#include "fedgrid/federation.hpp"
#include "fedgrid/rng.hpp"
#include "fedgrid/wire.hpp"

using namespace fedgrid;

namespace {

ParamVector pv(std::vector<double> values, std::uint64_t hash = 99) {
  return ParamVector{std::move(values), hash};
}

// Small config so federated runs finish in seconds.
MmgConfig tiny_config(int total_epochs = 6, int local_epochs = 3) {
  MmgConfig config;
  config.actor_hidden = {16, 16};
  config.critic_hidden = {16, 16};
  config.ppo.episodes_per_epoch = 2;
  config.schedule.total_epochs = total_epochs;
  config.schedule.local_epochs_per_round = local_epochs;
  config.schedule.upload_timeout_s = 20.0;
  config.eval_episodes = 2;
  return config;
}

bool same_reports(const std::vector<RoundReport>& a, const std::vector<RoundReport>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].round != b[i].round) return false;
    if (a[i].eval_pre != b[i].eval_pre) return false;
    if (a[i].eval_post != b[i].eval_post) return false;
    if (a[i].upload_norm != b[i].upload_norm) return false;
    if (a[i].global_norm != b[i].global_norm) return false;
    // wall_clock_ms intentionally excluded
  }
  return true;
}

}  // namespace

TEST_CASE("aggregate: equal inputs return that input") {
  std::vector<ParamVector> vectors = {pv({1.0, -2.0, 0.5}), pv({1.0, -2.0, 0.5}),
                                      pv({1.0, -2.0, 0.5})};
  ParamVector avg = aggregate(vectors, AggregationWeights::uniform(3));
  for (std::size_t i = 0; i < avg.values.size(); ++i) {
    CHECK(avg.values[i] == doctest::Approx(vectors[0].values[i]).epsilon(1e-15));
  }
}

TEST_CASE("aggregate: hand-computed averages") {
  std::vector<ParamVector> vectors = {pv({1.0, 2.0}), pv({3.0, 4.0}), pv({5.0, 6.0})};
  ParamVector uniform = aggregate(vectors, AggregationWeights::uniform(3));
  CHECK(uniform.values[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(uniform.values[1] == doctest::Approx(4.0).epsilon(1e-12));

  AggregationWeights w{{0.5, 0.25, 0.25}};
  ParamVector weighted = aggregate(vectors, w);
  CHECK(weighted.values[0] == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(weighted.values[1] == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("aggregate validates weights, lengths and spec hashes") {
  std::vector<ParamVector> vectors = {pv({1.0}), pv({2.0})};
  AggregationWeights bad{{0.6, 0.6}};
  CHECK_THROWS_AS(aggregate(vectors, bad), std::invalid_argument);

  std::vector<ParamVector> mixed = {pv({1.0}, 1), pv({2.0}, 2)};
  CHECK_THROWS_AS(aggregate(mixed, AggregationWeights::uniform(2)), std::invalid_argument);

  std::vector<ParamVector> ragged = {pv({1.0}), pv({2.0, 3.0})};
  CHECK_THROWS_AS(aggregate(ragged, AggregationWeights::uniform(2)), std::invalid_argument);
}

TEST_CASE("aggregation is affine and convexity-contained") {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    int n = 2 + static_cast<int>(rng.next_u64() % 4);
    int dim = 1 + static_cast<int>(rng.next_u64() % 16);
    std::vector<ParamVector> xs, ys, combos;
    double alpha = rng.uniform(-1.0, 2.0), beta = rng.uniform(-1.0, 2.0);
    for (int j = 0; j < n; ++j) {
      std::vector<double> x(dim), y(dim), c(dim);
      for (int i = 0; i < dim; ++i) {
        x[i] = rng.normal(0.0, 3.0);
        y[i] = rng.normal(0.0, 3.0);
        c[i] = alpha * x[i] + beta * y[i];
      }
      xs.push_back(pv(x));
      ys.push_back(pv(y));
      combos.push_back(pv(c));
    }
    AggregationWeights w = AggregationWeights::uniform(n);
    ParamVector ax = aggregate(xs, w);
    ParamVector ay = aggregate(ys, w);
    ParamVector ac = aggregate(combos, w);
    for (int i = 0; i < dim; ++i) {
      CHECK(ac.values[i] ==
            doctest::Approx(alpha * ax.values[i] + beta * ay.values[i]).epsilon(1e-12));
      double lo = xs[0].values[i], hi = xs[0].values[i];
      for (const auto& v : xs) {
        lo = std::min(lo, v.values[i]);
        hi = std::max(hi, v.values[i]);
      }
      CHECK(ax.values[i] >= lo - 1e-12);
      CHECK(ax.values[i] <= hi + 1e-12);
    }
  }
}

TEST_CASE("broadcast replaces parameters and resets optimizer state") {
  MmgConfig config = tiny_config();
  std::vector<PpoAgent> agents = {make_agent(config, 1), make_agent(config, 2),
                                  make_agent(config, 3)};
  // dirty the optimizer state
  agents[0].adam_actor.step = 7;
  agents[0].adam_actor.m.assign(agents[0].adam_actor.m.size(), 0.5);

  ParamVector global = make_agent(config, 42).params();
  broadcast_and_replace(global, agents);

  for (auto& agent : agents) {
    ParamVector now = agent.params();
    CHECK(now.values == global.values);
    CHECK(agent.adam_actor.step == 0);
    CHECK(agent.adam_log_std.step == 0);
    for (double m : agent.adam_actor.m) CHECK(m == 0.0);
  }

  // Identical parameters imply identical actions on identical states.
  MicrogridEnv env = make_eval_env(config, 0);
  MgState s = env.reset(default_scenario(), 3);
  auto obs = env.observe(s);
  auto a0 = agents[0].policy().mean_action(obs);
  auto a1 = agents[1].policy().mean_action(obs);
  auto a2 = agents[2].policy().mean_action(obs);
  CHECK(a0 == a1);
  CHECK(a1 == a2);

  // Broadcasting an agent's own params back to it is a no-op on params.
  ParamVector own = agents[1].params();
  broadcast_and_replace(own, std::span<PpoAgent>(&agents[1], 1));
  CHECK(agents[1].params().values == own.values);
}

TEST_CASE("run_training executes ceil(Ne/Ni) rounds with a barrier per round") {
  MmgConfig config = tiny_config(6, 3);
  TrainingResult result = run_training(config, default_scenario(), 11);
  REQUIRE(result.rounds.size() == 2);
  for (int r = 0; r < 2; ++r) {
    CHECK(result.rounds[r].round == r);
    for (int counter : result.rounds[r].agent_rounds) CHECK(counter == r);
    CHECK(result.rounds[r].eval_pre.size() == 3);
    CHECK(result.rounds[r].eval_post.size() == 3);
  }
  // Post-aggregation parameters are shared by all agents.
  CHECK(result.agents[0].params().values == result.final_global.values);
  CHECK(result.agents[1].params().values == result.final_global.values);
  // Training curves cover every epoch.
  for (const auto& curve : result.curves) CHECK(curve.size() == 6);
}

TEST_CASE("single-participant training reduces to local PPO with identity aggregation") {
  MmgConfig config = tiny_config(4, 2);
  config.devices.resize(1);
  ScenarioDay day = default_scenario();
  day.load.resize(1);

  TrainingResult fed = run_training(config, day, 21);

  // A hand-rolled local run from the same broadcast initialization.
  PpoAgent agent = make_agent(config, 0);
  agent.set_params(make_agent(config, seed_chain(21, {seeds::kInit})).params(), true);
  for (int r = 0; r < 2; ++r) {
    MicrogridRolloutEnv env(make_env(config, 0), day);
    local_update(agent, env, 2, local_update_seed(21, 0, r));
    // aggregation of one vector is that vector; broadcast resets Adam
    agent.set_params(agent.params(), true);
  }
  CHECK(fed.final_global.values == agent.params().values);
}

TEST_CASE("Ni = Ne gives exactly one round") {
  MmgConfig config = tiny_config(4, 4);
  TrainingResult result = run_training(config, default_scenario(), 31);
  CHECK(result.rounds.size() == 1);
}

TEST_CASE("local-only mode never averages") {
  MmgConfig config = tiny_config(4, 2);
  config.schedule.aggregate_enabled = false;
  TrainingResult result = run_training(config, default_scenario(), 41);
  REQUIRE(result.rounds.size() == 2);
  // Agents end with distinct parameters (no broadcast ever happened after
  // the initial one, and their environments differ).
  CHECK(result.agents[0].params().values != result.agents[1].params().values);
  for (const auto& round : result.rounds) {
    CHECK(round.eval_pre == round.eval_post);
  }
}

TEST_CASE("wire messages round trip") {
  wire::Message m;
  m.type = wire::MsgType::kParams;
  m.round = 3;
  m.spec_hash = 0xDEADBEEFCAFEBABEULL;
  m.data_size = 192;
  m.values = {1.5, -2.25, 1e-300, 0.0};
  wire::Message back = wire::decode(wire::encode(m));
  CHECK(back.type == wire::MsgType::kParams);
  CHECK(back.round == 3);
  CHECK(back.spec_hash == m.spec_hash);
  CHECK(back.data_size == 192);
  CHECK(back.values == m.values);

  wire::Message hello;
  hello.type = wire::MsgType::kHello;
  hello.spec_hash = 77;
  hello.agent_id = 2;
  wire::Message hback = wire::decode(wire::encode(hello));
  CHECK(hback.spec_hash == 77);
  CHECK(hback.agent_id == 2);

  wire::Message reject;
  reject.type = wire::MsgType::kReject;
  reject.text = "spec hash mismatch";
  CHECK(wire::decode(wire::encode(reject)).text == "spec hash mismatch");
}

TEST_CASE("tcp training reproduces the in-process run bitwise") {
  MmgConfig config = tiny_config(4, 2);
  ScenarioDay day = default_scenario();
  std::uint64_t seed = 2024;

  TrainingResult inproc = run_training(config, day, seed);

  FedServer server("127.0.0.1:0", config);
  std::string addr = "127.0.0.1:" + std::to_string(server.port());
  std::vector<std::thread> participants;
  std::vector<PpoAgent> remote_agents(3, make_agent(config, 0));
  for (int j = 0; j < 3; ++j) {
    participants.emplace_back([&, j] {
      remote_agents[j] = run_participant(config, day, addr, j, seed);
    });
  }
  TrainingResult tcp = server.run(day, seed);
  for (auto& t : participants) t.join();

  CHECK(tcp.final_global.values == inproc.final_global.values);
  CHECK(same_reports(tcp.rounds, inproc.rounds));
  for (int j = 0; j < 3; ++j) {
    CHECK(remote_agents[j].params().values == inproc.agents[j].params().values);
  }
}

TEST_CASE("server rejects a participant with a foreign topology") {
  MmgConfig config = tiny_config(2, 2);
  config.schedule.upload_timeout_s = 5.0;
  FedServer server("127.0.0.1:0", config);
  std::string addr = "127.0.0.1:" + std::to_string(server.port());

  MmgConfig other = config;
  other.actor_hidden = {8};

  bool saw_reject = false;
  std::string reject_text;
  std::thread rejected([&] {
    try {
      run_participant(other, default_scenario(), addr, 0, 1);
    } catch (const FederationError& e) {
      saw_reject = true;
      reject_text = e.what();
    }
  });

  // Let the real participants carry the run so the server finishes cleanly.
  std::vector<std::thread> participants;
  for (int j = 0; j < 3; ++j) {
    participants.emplace_back([&, j] { run_participant(config, default_scenario(), addr, j, 1); });
  }
  TrainingResult result = server.run(default_scenario(), 1);
  rejected.join();
  for (auto& t : participants) t.join();
  CHECK(result.rounds.size() == 1);
  CHECK(saw_reject);
  CHECK(reject_text.find("spec hash") != std::string::npos);
}

TEST_CASE("missing participants abort the round by timeout") {
  MmgConfig config = tiny_config(2, 2);
  config.schedule.upload_timeout_s = 1.0;
  FedServer server("127.0.0.1:0", config);
  std::string addr = "127.0.0.1:" + std::to_string(server.port());

  // Only 2 of the expected 3 join.
  std::vector<std::thread> participants;
  for (int j = 0; j < 2; ++j) {
    participants.emplace_back([&, j] {
      try {
        run_participant(config, default_scenario(), addr, j, 1);
      } catch (const std::exception&) {
        // server aborts; the dropped connection is expected here
      }
    });
  }
  CHECK_THROWS(server.run(default_scenario(), 1));
  for (auto& t : participants) t.join();
}
