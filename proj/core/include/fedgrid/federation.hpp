#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedgrid/approximator.hpp"
#include "fedgrid/ppo.hpp"
#include "fedgrid/scenario.hpp"

namespace fedgrid {

struct AggregationWeights {
  std::vector<double> p;

  static AggregationWeights uniform(int n);
  static AggregationWeights from_data_sizes(std::span<const std::int64_t> sizes);
  void validate() const;  // nonnegative, sums to 1 within 1e-9
};

// Elementwise weighted average of parameter vectors sharing one spec hash.
ParamVector aggregate(std::span<const ParamVector> vectors, const AggregationWeights& weights);

// Installs the global parameters into every agent and resets their Adam
// moments (averaged parameters are a new point; stale moments do not apply).
void broadcast_and_replace(const ParamVector& global, std::span<PpoAgent> agents);

// Raised when a participant fails mid-round; names the agent.
class FederationError : public std::runtime_error {
 public:
  FederationError(int agent_id, const std::string& message)
      : std::runtime_error(message), agent_id_(agent_id) {}
  int agent_id() const { return agent_id_; }

 private:
  int agent_id_ = -1;
};

struct RoundReport {
  int round = 0;
  std::vector<double> eval_pre;     // per agent, uploaded params before averaging
  std::vector<double> eval_post;    // per agent, after the global broadcast
  std::vector<double> upload_norm;  // l2 norm of each uploaded vector
  double global_norm = 0.0;
  std::vector<int> agent_rounds;    // round counter each upload reported
  double wall_clock_ms = 0.0;
};

struct TrainingResult {
  std::vector<RoundReport> rounds;
  std::vector<PpoAgent> agents;  // state after the final broadcast
  ParamVector final_global;
  std::vector<std::vector<EpochStats>> curves;  // per agent, all epochs in order
};

// Builds one PPO agent sized for the given MG; all agents share the
// initialization that the server broadcasts before round 0.
PpoAgent make_agent(const MmgConfig& config, std::uint64_t init_seed);
MicrogridEnv make_env(const MmgConfig& config, int mg_index);
MicrogridEnv make_eval_env(const MmgConfig& config, int mg_index);  // noise-free

// Full federated training with the in-process transport: rounds of
// {broadcast -> parallel local self-training -> upload -> aggregate},
// with per-agent evaluations before and after each aggregation.
// Deterministic given (config, scenario, global_seed).
TrainingResult run_training(const MmgConfig& config, const ScenarioDay& scenario,
                            std::uint64_t global_seed);

// Socket transport. The server performs the same loop as run_training but
// exchanges parameters with remote participants; given identical config,
// scenario and seed the results are bitwise identical to the in-process run.
class FedServer {
 public:
  // Binds and listens immediately so port() is valid before run().
  FedServer(const std::string& bind_address, const MmgConfig& config);

  std::uint16_t port() const;
  TrainingResult run(const ScenarioDay& scenario, std::uint64_t global_seed);

  ~FedServer();
  FedServer(const FedServer&) = delete;
  FedServer& operator=(const FedServer&) = delete;

 private:
  struct Impl;
  Impl* impl_;
};

// Joins a server and serves local updates for one MG until kDone.
// Returns the final agent (holding the last broadcast global parameters).
PpoAgent run_participant(const MmgConfig& config, const ScenarioDay& scenario,
                         const std::string& server_address, int agent_id,
                         std::uint64_t global_seed);

// Seed tags for the named hierarchy (documented in output headers).
namespace seeds {
inline constexpr std::uint64_t kInit = 0x1;
inline constexpr std::uint64_t kLocal = 0x2;
inline constexpr std::uint64_t kEval = 0x3;
}  // namespace seeds

inline std::uint64_t local_update_seed(std::uint64_t global_seed, int agent, int round) {
  return seed_chain(global_seed, {seeds::kLocal, static_cast<std::uint64_t>(agent),
                                  static_cast<std::uint64_t>(round)});
}

inline std::uint64_t eval_seed(std::uint64_t global_seed, int agent) {
  return seed_chain(global_seed, {seeds::kEval, static_cast<std::uint64_t>(agent)});
}

}  // namespace fedgrid
