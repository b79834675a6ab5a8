#include "fedgrid/mg_env.hpp"

#include <cmath>
#include <stdexcept>

#include "fedgrid/csv.hpp"

namespace fedgrid {

MicrogridEnv::MicrogridEnv(MgDevices devices, int mg_index, LossCoefficients loss,
                           double w_cost, double w_deviation, double initial_soc,
                           NoiseModel noise, double obs_power_scale, double obs_price_scale)
    : devices_(std::move(devices)),
      mg_index_(mg_index),
      loss_(loss),
      w_cost_(w_cost),
      w_deviation_(w_deviation),
      initial_soc_(initial_soc),
      noise_(noise),
      obs_power_scale_(obs_power_scale),
      obs_price_scale_(obs_price_scale) {
  devices_.cg.validate();
  devices_.ba.validate();
  loss_.validate();
  if (mg_index_ < 0) throw std::invalid_argument("MicrogridEnv: mg_index must be >= 0");
}

int MicrogridEnv::reg_count() const {
  return (devices_.has_wind ? 1 : 0) + (devices_.has_pv ? 1 : 0);
}

std::vector<double> MicrogridEnv::reg_vector(int hour_idx) const {
  std::vector<double> regs;
  if (devices_.has_wind) regs.push_back(realized_.wind[hour_idx]);
  if (devices_.has_pv) regs.push_back(realized_.pv[hour_idx]);
  return regs;
}

double MicrogridEnv::reg_power(int hour_idx) const {
  double total = 0.0;
  for (double p : reg_vector(hour_idx)) total += p;
  return total;
}

MgState MicrogridEnv::reset(const ScenarioDay& scenario, std::uint64_t realization_seed) {
  if (mg_index_ >= scenario.mg_count()) {
    throw std::invalid_argument("MicrogridEnv: scenario has no load series for MG " +
                                std::to_string(mg_index_ + 1));
  }
  NoiseModel noise = noise_;
  noise.seed = realization_seed;
  realized_ = sample_realization(scenario, noise);

  // t=0 observations come from the same day's hour 24 (wraparound).
  MgState state;
  state.prev_load = realized_.load[mg_index_][kHoursPerDay - 1];
  state.prev_reg = reg_vector(kHoursPerDay - 1);
  state.soc = initial_soc_;
  state.prev_price = realized_.price_dpn[kHoursPerDay - 1];
  state.hour_index = 0;
  return state;
}

StepOutcome MicrogridEnv::step(const MgState& state, const MgAction& action, int t) {
  if (t < 1 || t > kHoursPerDay) {
    throw std::domain_error("step: hour " + std::to_string(t) + " outside [1, 24]");
  }
  if (action.p_cg.size() != 1 || action.p_ba.size() != 1) {
    throw std::invalid_argument("step: expected one CG and one BA setpoint");
  }
  int idx = t - 1;

  // Device-bound clipping first, then SOC feasibility for the battery.
  std::vector<double> raw = {action.p_cg[0], action.p_ba[0]};
  std::pair<double, double> bounds[2] = {{devices_.cg.p_min, devices_.cg.p_max},
                                         {devices_.ba.p_min, devices_.ba.p_max}};
  std::vector<double> clipped = clip_action(raw, bounds);
  double p_cg = clipped[0];
  SocTransition soc_next = soc_step(state.soc, clipped[1], 1.0, devices_.ba);
  double p_ba = soc_next.applied_power;

  std::vector<double> regs = reg_vector(idx);
  double cg_arr[1] = {p_cg};
  double ba_arr[1] = {p_ba};
  double loss = power_loss(cg_arr, regs, ba_arr, loss_);

  double generation = p_cg + reg_power(idx) + p_ba - loss;
  double load = realized_.load[mg_index_][idx];
  double deviation = load - generation;

  double cost_cg = cg_cost(p_cg, devices_.cg);
  double cost_ba = ba_cost(p_ba, state.soc, devices_.ba);
  double price = realized_.price_dpn[idx];
  double reward = -w_cost_ * (cost_cg + cost_ba) - w_deviation_ * price * std::abs(deviation);

  StepOutcome out;
  out.reward = reward;
  out.deviation = deviation;
  out.cost_cg = cost_cg;
  out.cost_ba = cost_ba;
  out.loss = loss;
  out.applied_cg = {p_cg};
  out.applied_ba = {p_ba};
  out.next_state.prev_load = load;
  out.next_state.prev_reg = regs;
  out.next_state.soc = soc_next.soc;
  out.next_state.prev_price = price;
  out.next_state.hour_index = t % kHoursPerDay;
  return out;
}

MicrogridEnv::EpisodeResult MicrogridEnv::run_episode(const PolicyFn& policy,
                                                      const ScenarioDay& scenario,
                                                      std::uint64_t realization_seed) {
  EpisodeResult result;
  MgState state = reset(scenario, realization_seed);
  for (int t = 1; t <= kHoursPerDay; ++t) {
    PolicyDecision decision = policy(state);
    MgAction action = to_physical(decision.action_norm);
    StepOutcome outcome = step(state, action, t);

    Transition tr;
    tr.state = state;
    tr.action.p_cg = outcome.applied_cg;
    tr.action.p_ba = outcome.applied_ba;
    tr.reward = outcome.reward;
    tr.next_state = outcome.next_state;
    tr.log_prob = decision.log_prob;
    tr.value = decision.value;
    tr.presquash = decision.presquash;
    result.transitions.push_back(std::move(tr));

    result.total_reward += outcome.reward;
    state = outcome.next_state;
    result.outcomes.push_back(std::move(outcome));
  }
  return result;
}

std::vector<double> MicrogridEnv::observe(const MgState& state) const {
  std::vector<double> obs;
  obs.push_back(state.prev_load / obs_power_scale_);
  for (double r : state.prev_reg) obs.push_back(r / obs_power_scale_);
  obs.push_back(state.soc);
  obs.push_back(state.prev_price / obs_price_scale_);
  obs.push_back(static_cast<double>(state.hour_index) / kHoursPerDay);
  return obs;
}

int MicrogridEnv::observation_size() const { return 3 + reg_count() + 1; }

MgAction MicrogridEnv::to_physical(std::span<const double> action_norm) const {
  if (action_norm.size() != 2) throw std::invalid_argument("to_physical: expected 2 dims");
  auto map = [](double a, double lo, double hi) {
    return lo + (a + 1.0) * 0.5 * (hi - lo);
  };
  MgAction action;
  action.p_cg = {map(action_norm[0], devices_.cg.p_min, devices_.cg.p_max)};
  action.p_ba = {map(action_norm[1], devices_.ba.p_min, devices_.ba.p_max)};
  return action;
}

void MicrogridEnv::export_trace(const std::string& path, const std::vector<StepOutcome>& steps) {
  CsvWriter out(path);
  out.row({"hour", "p_cg", "p_ba", "reg", "load", "loss", "deviation", "cost_cg", "cost_ba",
           "reward"});
  int hour = 1;
  for (const auto& s : steps) {
    double reg = 0.0;
    for (double r : s.next_state.prev_reg) reg += r;
    double p_cg = s.applied_cg.empty() ? 0.0 : s.applied_cg[0];
    double p_ba = s.applied_ba.empty() ? 0.0 : s.applied_ba[0];
    out.numeric_row({static_cast<double>(hour), p_cg, p_ba, reg, s.next_state.prev_load, s.loss,
                     s.deviation, s.cost_cg, s.cost_ba, s.reward});
    ++hour;
  }
}

}  // namespace fedgrid
