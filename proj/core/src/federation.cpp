#include "fedgrid/federation.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <stdexcept>

#include "fedgrid/wire.hpp"

namespace fedgrid {

AggregationWeights AggregationWeights::uniform(int n) {
  AggregationWeights w;
  w.p.assign(n, 1.0 / n);
  return w;
}

AggregationWeights AggregationWeights::from_data_sizes(std::span<const std::int64_t> sizes) {
  std::int64_t total = 0;
  for (auto s : sizes) total += s;
  if (total <= 0) throw std::invalid_argument("aggregation weights: no data collected");
  AggregationWeights w;
  for (auto s : sizes) w.p.push_back(static_cast<double>(s) / static_cast<double>(total));
  return w;
}

void AggregationWeights::validate() const {
  double sum = 0.0;
  for (double v : p) {
    if (v < 0.0) throw std::invalid_argument("aggregation weights must be nonnegative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("aggregation weights must sum to 1 (got " + std::to_string(sum) +
                                ")");
  }
}

ParamVector aggregate(std::span<const ParamVector> vectors, const AggregationWeights& weights) {
  if (vectors.empty()) throw std::invalid_argument("aggregate: no vectors");
  if (weights.p.size() != vectors.size()) {
    throw std::invalid_argument("aggregate: one weight per vector required");
  }
  weights.validate();

  const ParamVector& first = vectors[0];
  for (const auto& v : vectors) {
    if (v.spec_hash != first.spec_hash) {
      throw std::invalid_argument("aggregate: spec hash mismatch between participants");
    }
    if (v.values.size() != first.values.size()) {
      throw std::invalid_argument("aggregate: parameter length mismatch");
    }
  }

  ParamVector out;
  out.spec_hash = first.spec_hash;
  out.values.assign(first.values.size(), 0.0);
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    double w = weights.p[j];
    const auto& vals = vectors[j].values;
    for (std::size_t i = 0; i < vals.size(); ++i) out.values[i] += w * vals[i];
  }
  return out;
}

void broadcast_and_replace(const ParamVector& global, std::span<PpoAgent> agents) {
  for (auto& agent : agents) {
    agent.set_params(global, /*reset_optimizer=*/true);
  }
}

PpoAgent make_agent(const MmgConfig& config, std::uint64_t init_seed) {
  // Observation layout: prev load, assigned REGs, SOC, prev price, hour.
  MicrogridEnv env = make_env(config, 0);
  return PpoAgent::create(env.observation_size(), env.action_size(), config.actor_hidden,
                          config.critic_hidden, config.ppo, init_seed);
}

MicrogridEnv make_env(const MmgConfig& config, int mg_index) {
  if (mg_index < 0 || mg_index >= config.mg_count()) {
    throw std::out_of_range("mg index " + std::to_string(mg_index) + " out of range");
  }
  return MicrogridEnv(config.devices[mg_index], mg_index, config.loss, config.w_cost,
                      config.w_deviation, config.initial_soc, config.noise,
                      config.obs_power_scale, config.obs_price_scale);
}

MicrogridEnv make_eval_env(const MmgConfig& config, int mg_index) {
  MmgConfig noise_free = config;
  noise_free.noise.wind_pv_std = 0.0;
  noise_free.noise.load_std = 0.0;
  return make_env(noise_free, mg_index);
}

namespace {

struct Upload {
  ParamVector params;
  std::int64_t data_size = 0;
  int round = 0;
  std::vector<EpochStats> epochs;
};

double wall_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

// Shared per-round bookkeeping for both transports: evaluations, weighting,
// aggregation and report assembly.
class RoundLedger {
 public:
  RoundLedger(const MmgConfig& config, const ScenarioDay& scenario, std::uint64_t global_seed)
      : config_(config), scenario_(scenario), global_seed_(global_seed) {
    for (int j = 0; j < config.mg_count(); ++j) eval_envs_.push_back(make_eval_env(config, j));
  }

  double evaluate(const ParamVector& pv, int agent_idx) {
    PpoAgent probe = make_agent(config_, 0);
    probe.set_params(pv, true);
    return evaluate_policy(probe, eval_envs_[agent_idx], scenario_, config_.eval_episodes,
                           eval_seed(global_seed_, agent_idx));
  }

  // Consumes the round's uploads; returns the new global (or an empty
  // optional-like flag via aggregate_enabled) and the report.
  RoundReport close_round(int round, std::span<const Upload> uploads, ParamVector& global,
                          std::span<PpoAgent> agents,
                          std::chrono::steady_clock::time_point start) {
    RoundReport report;
    report.round = round;
    int n = static_cast<int>(uploads.size());
    for (int j = 0; j < n; ++j) {
      report.eval_pre.push_back(evaluate(uploads[j].params, j));
      report.upload_norm.push_back(uploads[j].params.l2_norm());
      report.agent_rounds.push_back(uploads[j].round);
      if (uploads[j].round != round) {
        throw FederationError(j, "agent " + std::to_string(j) + " uploaded round " +
                                     std::to_string(uploads[j].round) + " during round " +
                                     std::to_string(round));
      }
    }

    if (config_.schedule.aggregate_enabled) {
      AggregationWeights weights;
      if (config_.schedule.mode == AggregationMode::kDataWeighted) {
        std::vector<std::int64_t> sizes;
        for (const auto& u : uploads) sizes.push_back(u.data_size);
        weights = AggregationWeights::from_data_sizes(sizes);
      } else {
        weights = AggregationWeights::uniform(n);
      }
      std::vector<ParamVector> vectors;
      for (const auto& u : uploads) vectors.push_back(u.params);
      global = aggregate(vectors, weights);
      if (!agents.empty()) broadcast_and_replace(global, agents);
      for (int j = 0; j < n; ++j) report.eval_post.push_back(evaluate(global, j));
    } else {
      // Local-only baseline: no averaging, agents keep their own parameters.
      for (int j = 0; j < n; ++j) report.eval_post.push_back(report.eval_pre[j]);
    }
    report.global_norm = global.l2_norm();
    report.wall_clock_ms = wall_ms(start);
    return report;
  }

 private:
  const MmgConfig& config_;
  const ScenarioDay& scenario_;
  std::uint64_t global_seed_;
  std::vector<MicrogridEnv> eval_envs_;
};

Upload run_local_round(PpoAgent& agent, const MmgConfig& config, const ScenarioDay& scenario,
                       int agent_idx, int round, std::uint64_t global_seed) {
  MicrogridRolloutEnv env(make_env(config, agent_idx), scenario);
  LocalUpdateResult local =
      local_update(agent, env, config.schedule.epochs_in_round(round),
                   local_update_seed(global_seed, agent_idx, round));
  Upload up;
  up.params = agent.params();
  up.data_size = local.transitions_collected;
  up.round = round;
  up.epochs = std::move(local.epochs);
  return up;
}

}  // namespace

TrainingResult run_training(const MmgConfig& config, const ScenarioDay& scenario,
                            std::uint64_t global_seed) {
  config.validate();
  scenario.validate();
  if (scenario.mg_count() != config.mg_count()) {
    throw std::invalid_argument("scenario/config MG count mismatch");
  }

  int n = config.mg_count();
  TrainingResult result;
  result.curves.resize(n);

  std::vector<PpoAgent> agents;
  for (int j = 0; j < n; ++j) agents.push_back(make_agent(config, 0));

  // The server's initial global model, broadcast before round 0 so every
  // participant starts from the same point.
  ParamVector global = make_agent(config, seed_chain(global_seed, {seeds::kInit})).params();
  broadcast_and_replace(global, agents);

  RoundLedger ledger(config, scenario, global_seed);
  int rounds = config.schedule.rounds();
  for (int r = 0; r < rounds; ++r) {
    auto start = std::chrono::steady_clock::now();

    // "Parallelly": independent tasks whose only synchronization point is
    // the upload barrier below; each learner owns its seeded RNG stream, so
    // results do not depend on scheduling.
    std::vector<std::future<Upload>> futures;
    for (int j = 0; j < n; ++j) {
      futures.push_back(std::async(std::launch::async, [&, j, r] {
        return run_local_round(agents[j], config, scenario, j, r, global_seed);
      }));
    }
    std::vector<Upload> uploads(n);
    for (int j = 0; j < n; ++j) {
      try {
        uploads[j] = futures[j].get();
      } catch (const std::exception& e) {
        throw FederationError(j, "round " + std::to_string(r) + ", agent " + std::to_string(j) +
                                     ": " + e.what());
      }
    }
    for (int j = 0; j < n; ++j) {
      for (auto& s : uploads[j].epochs) {
        s.epoch = r * config.schedule.local_epochs_per_round + s.epoch;
        result.curves[j].push_back(s);
      }
    }

    result.rounds.push_back(ledger.close_round(r, uploads, global, agents, start));
  }

  result.agents = std::move(agents);
  result.final_global =
      config.schedule.aggregate_enabled ? global : ParamVector{};
  if (!config.schedule.aggregate_enabled && !result.agents.empty()) {
    result.final_global = result.agents[0].params();
  }
  return result;
}

struct FedServer::Impl {
  wire::Listener listener;
  MmgConfig config;

  Impl(const std::string& addr, const MmgConfig& cfg) : listener(addr), config(cfg) {}
};

FedServer::FedServer(const std::string& bind_address, const MmgConfig& config)
    : impl_(new Impl(bind_address, config)) {
  config.validate();
}

FedServer::~FedServer() { delete impl_; }

std::uint16_t FedServer::port() const { return impl_->listener.port(); }

TrainingResult FedServer::run(const ScenarioDay& scenario, std::uint64_t global_seed) {
  const MmgConfig& config = impl_->config;
  scenario.validate();
  int n = config.mg_count();
  double timeout = config.schedule.upload_timeout_s;

  PpoAgent reference = make_agent(config, 0);
  std::uint64_t expected_hash = reference.layout().hash();

  // Admission: n participants, each announcing its agent id and topology.
  std::vector<wire::Socket> sockets(n);
  std::vector<bool> joined(n, false);
  int admitted = 0;
  while (admitted < n) {
    wire::Socket sock = impl_->listener.accept(timeout);
    wire::Message hello = sock.recv_message(timeout);
    if (hello.type != wire::MsgType::kHello) {
      wire::Message reject{wire::MsgType::kReject};
      reject.text = "expected HELLO";
      sock.send_message(reject);
      continue;
    }
    if (hello.spec_hash != expected_hash) {
      wire::Message reject{wire::MsgType::kReject};
      reject.text = "spec hash mismatch: participant topology differs from server";
      sock.send_message(reject);
      continue;
    }
    int id = static_cast<int>(hello.agent_id);
    if (id < 0 || id >= n || joined[id]) {
      wire::Message reject{wire::MsgType::kReject};
      reject.text = "agent id " + std::to_string(id) + " invalid or already joined";
      sock.send_message(reject);
      continue;
    }
    sockets[id] = std::move(sock);
    joined[id] = true;
    ++admitted;
  }

  TrainingResult result;
  result.curves.resize(n);
  ParamVector global = make_agent(config, seed_chain(global_seed, {seeds::kInit})).params();
  RoundLedger ledger(config, scenario, global_seed);

  int rounds = config.schedule.rounds();
  for (int r = 0; r < rounds; ++r) {
    auto start = std::chrono::steady_clock::now();
    for (int j = 0; j < n; ++j) {
      wire::Message msg{wire::MsgType::kGlobal};
      msg.round = static_cast<std::uint32_t>(r);
      msg.spec_hash = global.spec_hash;
      msg.values = global.values;
      sockets[j].send_message(msg);
    }

    // Barrier: every upload for round r must arrive before aggregation.
    std::vector<Upload> uploads(n);
    for (int j = 0; j < n; ++j) {
      wire::Message msg;
      try {
        msg = sockets[j].recv_message(timeout);
      } catch (const std::exception& e) {
        throw FederationError(j, "round " + std::to_string(r) + ": no upload from agent " +
                                     std::to_string(j) + " (" + e.what() + ")");
      }
      if (msg.type != wire::MsgType::kParams) {
        throw FederationError(j, "agent " + std::to_string(j) + " sent unexpected frame");
      }
      if (msg.spec_hash != expected_hash) {
        throw FederationError(j, "agent " + std::to_string(j) + " upload spec hash mismatch");
      }
      uploads[j].params = ParamVector{std::move(msg.values), msg.spec_hash};
      uploads[j].data_size = static_cast<std::int64_t>(msg.data_size);
      uploads[j].round = static_cast<int>(msg.round);
    }

    result.rounds.push_back(ledger.close_round(r, uploads, global, {}, start));
  }

  // Final broadcast so participants end holding the aggregated model.
  for (int j = 0; j < n; ++j) {
    if (config.schedule.aggregate_enabled) {
      wire::Message msg{wire::MsgType::kGlobal};
      msg.round = static_cast<std::uint32_t>(rounds);
      msg.spec_hash = global.spec_hash;
      msg.values = global.values;
      sockets[j].send_message(msg);
    }
    sockets[j].send_message(wire::Message{wire::MsgType::kDone});
  }

  result.final_global = global;
  return result;
}

PpoAgent run_participant(const MmgConfig& config, const ScenarioDay& scenario,
                         const std::string& server_address, int agent_id,
                         std::uint64_t global_seed) {
  config.validate();
  double timeout = config.schedule.upload_timeout_s;
  PpoAgent agent = make_agent(config, 0);
  int rounds = config.schedule.rounds();

  wire::Socket sock = wire::connect(server_address, timeout);
  wire::Message hello{wire::MsgType::kHello};
  hello.spec_hash = agent.layout().hash();
  hello.agent_id = static_cast<std::uint32_t>(agent_id);
  sock.send_message(hello);

  while (true) {
    wire::Message msg = sock.recv_message(timeout);
    if (msg.type == wire::MsgType::kDone) break;
    if (msg.type == wire::MsgType::kReject) {
      throw FederationError(agent_id, "server rejected participant: " + msg.text);
    }
    if (msg.type != wire::MsgType::kGlobal) {
      throw FederationError(agent_id, "unexpected frame from server");
    }

    agent.set_params(ParamVector{std::move(msg.values), msg.spec_hash}, true);
    int r = static_cast<int>(msg.round);
    if (r >= rounds) continue;  // final broadcast; wait for kDone

    MicrogridRolloutEnv env(make_env(config, agent_id), scenario);
    LocalUpdateResult local = local_update(agent, env, config.schedule.epochs_in_round(r),
                                           local_update_seed(global_seed, agent_id, r));

    wire::Message upload{wire::MsgType::kParams};
    upload.round = static_cast<std::uint32_t>(r);
    upload.data_size = static_cast<std::uint64_t>(local.transitions_collected);
    ParamVector pv = agent.params();
    upload.spec_hash = pv.spec_hash;
    upload.values = std::move(pv.values);
    sock.send_message(upload);
  }
  return agent;
}

}  // namespace fedgrid
