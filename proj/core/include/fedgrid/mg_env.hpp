#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fedgrid/grid_model.hpp"
#include "fedgrid/scenario.hpp"

namespace fedgrid {

// Observation available to the agent when choosing the action for the next
// hour: previous hour's load, REG outputs and price, plus current SOC.
struct MgState {
  double prev_load = 0.0;
  std::vector<double> prev_reg;  // one entry per assigned REG (wind, pv)
  double soc = 0.5;
  double prev_price = 0.0;       // distribution-network purchase price
  int hour_index = 0;            // zero-based index of the next scheduling hour
};

// Physical setpoints (kW). step() clips them against device bounds and then
// against SOC feasibility, so raw policy outputs are acceptable.
struct MgAction {
  std::vector<double> p_cg;
  std::vector<double> p_ba;
};

struct StepOutcome {
  MgState next_state;
  double reward = 0.0;
  double deviation = 0.0;  // P_de = load - (generation - loss); positive = shortage
  double cost_cg = 0.0;
  double cost_ba = 0.0;
  double loss = 0.0;       // network power loss, kW
  std::vector<double> applied_cg;  // post-clip setpoints actually used
  std::vector<double> applied_ba;  // post-clip, post-SOC-feasibility
};

// One MDP step as recorded during a rollout.
struct Transition {
  MgState state;
  MgAction action;           // applied physical action
  double reward = 0.0;
  MgState next_state;
  double log_prob = 0.0;     // of the pre-squash sample below, at action time
  double value = 0.0;        // critic estimate at action time
  std::vector<double> presquash;  // Gaussian sample before tanh squashing
};

// The policy gives back everything the PPO buffer needs about one decision.
struct PolicyDecision {
  std::vector<double> action_norm;  // in [-1, 1] per dimension
  std::vector<double> presquash;
  double log_prob = 0.0;
  double value = 0.0;
};

using PolicyFn = std::function<PolicyDecision(const MgState&)>;

// Per-microgrid 24-hour scheduling MDP with the physics-informed reward
//   r_t = -w_C (C_cg + C_ba) - w_de * price_dpn(t) * |P_de|.
// One instance is single-owner mutable state; run one per agent.
class MicrogridEnv {
 public:
  // mg_index selects this MG's load series within the scenario.
  MicrogridEnv(MgDevices devices, int mg_index, LossCoefficients loss, double w_cost,
               double w_deviation, double initial_soc, NoiseModel noise,
               double obs_power_scale = 600.0, double obs_price_scale = 30.0);

  // Samples a realization of the scenario and seeds prev_* observations from
  // its hour-24 values (the previous day's last hour stands in for t=0).
  MgState reset(const ScenarioDay& scenario, std::uint64_t realization_seed);

  // Applies the action for hour t in [1, 24]. Throws std::domain_error for t
  // outside the horizon.
  StepOutcome step(const MgState& state, const MgAction& action, int t);

  // Collects a full 24-step episode under the given policy.
  struct EpisodeResult {
    std::vector<Transition> transitions;
    std::vector<StepOutcome> outcomes;  // parallel to transitions
    double total_reward = 0.0;
  };
  EpisodeResult run_episode(const PolicyFn& policy, const ScenarioDay& scenario,
                            std::uint64_t realization_seed);

  // Normalized observation vector fed to function approximators.
  std::vector<double> observe(const MgState& state) const;
  int observation_size() const;
  int action_size() const { return 2; }  // one CG + one BA setpoint

  // Affine map from [-1, 1] policy outputs to physical device setpoints.
  MgAction to_physical(std::span<const double> action_norm) const;

  int reg_count() const;
  const MgDevices& devices() const { return devices_; }
  int mg_index() const { return mg_index_; }
  const ScenarioDay& realized() const { return realized_; }
  double w_cost() const { return w_cost_; }
  double w_deviation() const { return w_deviation_; }

  // Writes the 24-row dispatch trace CSV for one episode.
  static void export_trace(const std::string& path, const std::vector<StepOutcome>& steps);

 private:
  double reg_power(int hour_idx) const;  // sum of assigned REG outputs
  std::vector<double> reg_vector(int hour_idx) const;

  MgDevices devices_;
  int mg_index_;
  LossCoefficients loss_;
  double w_cost_;
  double w_deviation_;
  double initial_soc_;
  NoiseModel noise_;
  double obs_power_scale_;
  double obs_price_scale_;
  ScenarioDay realized_;  // realization for the episode in progress
};

}  // namespace fedgrid
