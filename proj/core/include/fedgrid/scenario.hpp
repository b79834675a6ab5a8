#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedgrid/grid_model.hpp"

namespace fedgrid {

inline constexpr int kHoursPerDay = 24;

// One day of forecasts and prices driving the multi-microgrid system.
// Wind and PV are single shared series observed by every MG; loads are
// per MG; prices are the distribution-network purchase price and the
// inter-MG trading price.
struct ScenarioDay {
  std::vector<double> wind;       // kW, 24 entries
  std::vector<double> pv;         // kW, 24 entries
  std::vector<std::vector<double>> load;  // [mg][24] kW
  std::vector<double> price_dpn;  // $/kW, 24 entries
  std::vector<double> price_mg;   // $/kW, 24 entries

  int mg_count() const { return static_cast<int>(load.size()); }

  // Enforces series lengths, nonnegative powers and the price ordering
  // price_mg <= price_dpn at every hour. Throws ParseError citing the hour.
  void validate() const;
};

// Relative Gaussian forecast-error model: wind/PV at 15%, load at 3%.
struct NoiseModel {
  double wind_pv_std = 0.15;
  double load_std = 0.03;
  std::uint64_t seed = 0;
};

// The day exactly as tabulated for the three-MG reference system.
ScenarioDay default_scenario();

struct MgDevices {
  CgParams cg;
  BaParams ba;
  bool has_wind = true;  // REG assignment; the shared series this MG observes
  bool has_pv = true;
};

// Cost coefficients and bounds for the three reference MGs.
std::vector<MgDevices> default_device_params();

// Applies multiplicative noise x -> x * (1 + eps), eps ~ N(0, std^2), to the
// wind, PV and load forecasts, clamped at zero. Prices are left untouched.
// Deterministic given noise.seed.
ScenarioDay sample_realization(const ScenarioDay& day, const NoiseModel& noise);

// CSV persistence: header row naming each series, 24 data rows. Round trips
// losslessly; load validates and reports the offending row/column.
ScenarioDay load_scenario(const std::string& path);
void save_scenario(const ScenarioDay& day, const std::string& path);

// Rescales one MG's load profile so its 24-hour mean equals target_mean_kw,
// preserving the profile shape. Used by the capacity-relative evaluation
// modes (self-sufficient / self-insufficient demand regimes).
ScenarioDay scale_load_mean(const ScenarioDay& day, int mg_index, double target_mean_kw);

struct PpoHyper {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double lr_actor = 1e-4;
  double lr_critic = 1e-3;
  // The state-independent log-std tail is not part of the actor network; it
  // gets its own rate so exploration can anneal within the epoch budget.
  double lr_log_std = 4e-3;
  int epochs_per_update = 4;    // full-batch passes per training epoch
  int episodes_per_epoch = 8;   // rollouts collected per training epoch
  bool normalize_advantages = true;  // standardize to mean 0 / std 1 per batch
  bool faithful_critic = false;      // differentiate through the TD target
  double init_log_std = -0.6931471805599453;  // ln(0.5)
  double min_log_std = -4.605170185988091;    // ln(0.01)
  double max_log_std = 0.0;                   // ln(1)
  // Fixed gain on the critic head; lets the value net span the return scale
  // without inflating the per-parameter optimizer steps.
  double critic_output_scale = 100.0;

  void validate() const;
};

enum class AggregationMode { kUniform, kDataWeighted };

struct FedSchedule {
  int total_epochs = 1500;           // N_e
  int local_epochs_per_round = 500;  // N_i
  AggregationMode mode = AggregationMode::kUniform;
  bool aggregate_enabled = true;  // false = local-only baseline
  double upload_timeout_s = 60.0;

  int rounds() const;  // ceil(N_e / N_i); last round may be partial
  int epochs_in_round(int round) const;
  void validate() const;
};

// Everything needed to build and train the multi-microgrid system.
struct MmgConfig {
  std::vector<MgDevices> devices = default_device_params();
  LossCoefficients loss;
  // Reward magnitude weights. The raw cost/deviation terms sit at the 1e3
  // scale per hour; training needs them down at O(10) so the critic can
  // track the returns under the reference learning rates. Reported rewards
  // scale linearly with these weights.
  double w_cost = 0.01;       // w_C
  double w_deviation = 0.01;  // w_de
  double initial_soc = 0.5;
  NoiseModel noise;
  PpoHyper ppo;
  FedSchedule schedule;
  std::vector<int> actor_hidden = {64, 64};
  std::vector<int> critic_hidden = {64, 64};
  double obs_power_scale = 600.0;  // kW divisor for policy inputs
  double obs_price_scale = 30.0;   // $/kW divisor
  int eval_episodes = 5;

  int mg_count() const { return static_cast<int>(devices.size()); }
  void validate() const;
};

// JSON config document ("//" comments allowed). Missing keys keep defaults.
MmgConfig load_config(const std::string& path);
std::string config_to_json(const MmgConfig& config);

}  // namespace fedgrid
