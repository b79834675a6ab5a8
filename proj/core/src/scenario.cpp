#include "fedgrid/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fedgrid/csv.hpp"
#include "fedgrid/rng.hpp"

namespace fedgrid {

namespace {

// Reference day: shared wind/PV forecasts, trading prices and per-MG loads.
constexpr double kWind[kHoursPerDay] = {
    51.48, 38.37, 43.56, 40.75, 27.74, 30.15, 28.65, 23.38, 21.75, 34.82, 27.17, 30.20,
    23.52, 39.48, 35.74, 18.06, 24.27, 26.26, 26.77, 26.22, 32.84, 36.02, 37.23, 44.12};
constexpr double kPv[kHoursPerDay] = {
    0.00, 0.00, 0.00, 0.00, 0.00, 0.00, 0.16, 1.77, 5.30, 11.60, 36.64, 42.68,
    35.22, 35.46, 34.83, 23.62, 14.18, 4.67, 0.18, 0.00, 0.00, 0.00, 0.00, 0.00};
constexpr double kPriceDpn[kHoursPerDay] = {
    8.65, 8.11, 8.25, 8.10, 8.14, 8.13, 8.34, 9.35, 12.00, 9.19, 12.30, 20.70,
    26.82, 27.35, 13.81, 17.31, 16.42, 9.83, 8.63, 8.87, 8.35, 16.44, 16.19, 8.87};
constexpr double kPriceMg[kHoursPerDay] = {
    4.33, 4.06, 4.13, 4.05, 4.07, 4.07, 4.17, 4.68, 6.00, 4.60, 6.15, 10.35,
    13.41, 13.68, 6.91, 8.66, 8.21, 4.92, 4.32, 4.44, 4.18, 8.22, 8.10, 4.44};
constexpr double kLoadMg1[kHoursPerDay] = {
    457.70, 336.50, 274.90, 272.60, 245.30, 233.70, 274.60, 291.00, 315.70, 362.40, 320.00, 350.00,
    345.20, 320.60, 333.20, 316.80, 291.30, 413.80, 539.80, 557.20, 557.10, 535.00, 437.80, 447.30};
constexpr double kLoadMg2[kHoursPerDay] = {
    110.50, 109.85, 112.45, 110.50, 113.75, 120.25, 130.00, 157.95, 165.10, 169.00, 173.55, 168.35,
    168.35, 165.75, 170.30, 172.25, 165.75, 164.25, 162.50, 165.75, 169.00, 161.20, 148.00, 119.60};
constexpr double kLoadMg3[kHoursPerDay] = {
    124.71, 123.98, 126.91, 124.71, 128.38, 135.43, 146.72, 178.26, 186.33, 190.73, 195.87, 190.00,
    190.00, 187.07, 192.20, 194.40, 187.07, 185.60, 183.40, 187.07, 190.73, 181.93, 161.39, 134.98};

std::vector<double> to_vec(const double (&arr)[kHoursPerDay]) {
  return std::vector<double>(arr, arr + kHoursPerDay);
}

}  // namespace

void ScenarioDay::validate() const {
  auto check_len = [](const std::vector<double>& v, const char* name) {
    if (v.size() != kHoursPerDay) {
      throw ParseError(std::string(name) + " has " + std::to_string(v.size()) +
                           " rows, expected 24",
                       v.size(), 0);
    }
  };
  check_len(wind, "wind");
  check_len(pv, "pv");
  check_len(price_dpn, "price_dpn");
  check_len(price_mg, "price_mg");
  if (load.empty()) throw ParseError("scenario has no load series", 0, 0);
  for (std::size_t m = 0; m < load.size(); ++m) {
    check_len(load[m], ("load_mg" + std::to_string(m + 1)).c_str());
  }
  for (int t = 0; t < kHoursPerDay; ++t) {
    auto check_nonneg = [t](double v, const std::string& name) {
      if (v < 0.0) {
        throw ParseError("negative power in " + name + " at hour " + std::to_string(t + 1),
                         static_cast<std::size_t>(t + 1), 0);
      }
    };
    check_nonneg(wind[t], "wind");
    check_nonneg(pv[t], "pv");
    for (std::size_t m = 0; m < load.size(); ++m) {
      check_nonneg(load[m][t], "load_mg" + std::to_string(m + 1));
    }
    if (price_mg[t] > price_dpn[t]) {
      throw ParseError("price_mg exceeds price_dpn at hour " + std::to_string(t + 1),
                       static_cast<std::size_t>(t + 1), 0);
    }
  }
}

ScenarioDay default_scenario() {
  ScenarioDay day;
  day.wind = to_vec(kWind);
  day.pv = to_vec(kPv);
  day.price_dpn = to_vec(kPriceDpn);
  day.price_mg = to_vec(kPriceMg);
  day.load = {to_vec(kLoadMg1), to_vec(kLoadMg2), to_vec(kLoadMg3)};
  return day;
}

std::vector<MgDevices> default_device_params() {
  std::vector<MgDevices> mgs(3);
  mgs[0].cg = {0.0081, 5.72, 63.0, 0.0, 200.0};
  mgs[0].ba.a = 0.0153; mgs[0].ba.b = 5.54; mgs[0].ba.c = 26.0;
  mgs[1].cg = {0.0076, 5.68, 365.0, 0.0, 280.0};
  mgs[1].ba.a = 0.0163; mgs[1].ba.b = 5.64; mgs[1].ba.c = 32.0;
  mgs[2].cg = {0.0095, 5.81, 108.0, 0.0, 200.0};
  mgs[2].ba.a = 0.0173; mgs[2].ba.b = 5.74; mgs[2].ba.c = 38.0;
  return mgs;
}

ScenarioDay sample_realization(const ScenarioDay& day, const NoiseModel& noise) {
  if (noise.wind_pv_std < 0.0 || noise.load_std < 0.0) {
    throw std::invalid_argument("NoiseModel: standard deviations must be >= 0");
  }
  Rng rng(noise.seed);
  ScenarioDay out = day;
  auto perturb = [&rng](std::vector<double>& series, double rel_std) {
    for (double& x : series) {
      x = std::max(0.0, x * (1.0 + rng.normal(0.0, rel_std)));
    }
  };
  perturb(out.wind, noise.wind_pv_std);
  perturb(out.pv, noise.wind_pv_std);
  for (auto& series : out.load) perturb(series, noise.load_std);
  return out;
}

ScenarioDay load_scenario(const std::string& path) {
  CsvTable table = read_csv(path);
  if (table.rows.size() != kHoursPerDay) {
    throw ParseError("scenario '" + path + "' has " + std::to_string(table.rows.size()) +
                         " data rows, expected 24",
                     table.rows.size(), 0);
  }
  ScenarioDay day;
  std::size_t wind_col = table.column_index("wind_kw");
  std::size_t pv_col = table.column_index("pv_kw");
  std::size_t dpn_col = table.column_index("price_dpn");
  std::size_t mg_col = table.column_index("price_mg");
  std::vector<std::size_t> load_cols;
  for (int m = 1;; ++m) {
    std::string name = "load_mg" + std::to_string(m);
    bool found = false;
    for (std::size_t i = 0; i < table.header.size(); ++i) {
      if (table.header[i] == name) {
        load_cols.push_back(i);
        found = true;
        break;
      }
    }
    if (!found) break;
  }
  if (load_cols.empty()) throw ParseError("scenario has no load_mg1 column", 0, 0);

  day.load.resize(load_cols.size());
  for (std::size_t t = 0; t < kHoursPerDay; ++t) {
    day.wind.push_back(parse_double_cell(table, t, wind_col));
    day.pv.push_back(parse_double_cell(table, t, pv_col));
    day.price_dpn.push_back(parse_double_cell(table, t, dpn_col));
    day.price_mg.push_back(parse_double_cell(table, t, mg_col));
    for (std::size_t m = 0; m < load_cols.size(); ++m) {
      day.load[m].push_back(parse_double_cell(table, t, load_cols[m]));
    }
  }
  day.validate();
  return day;
}

void save_scenario(const ScenarioDay& day, const std::string& path) {
  day.validate();
  CsvWriter out(path);
  std::vector<std::string> header = {"hour", "wind_kw", "pv_kw", "price_dpn", "price_mg"};
  for (int m = 1; m <= day.mg_count(); ++m) header.push_back("load_mg" + std::to_string(m));
  out.row(header);
  for (int t = 0; t < kHoursPerDay; ++t) {
    std::vector<double> cells = {static_cast<double>(t + 1), day.wind[t], day.pv[t],
                                 day.price_dpn[t], day.price_mg[t]};
    for (const auto& series : day.load) cells.push_back(series[t]);
    out.numeric_row(cells);
  }
}

ScenarioDay scale_load_mean(const ScenarioDay& day, int mg_index, double target_mean_kw) {
  if (mg_index < 0 || mg_index >= day.mg_count()) {
    throw std::out_of_range("scale_load_mean: bad MG index");
  }
  if (!(target_mean_kw > 0.0)) {
    throw std::invalid_argument("scale_load_mean: target mean must be positive");
  }
  double mean = 0.0;
  for (double v : day.load[mg_index]) mean += v;
  mean /= kHoursPerDay;
  if (!(mean > 0.0)) throw std::invalid_argument("scale_load_mean: zero load profile");

  ScenarioDay out = day;
  double factor = target_mean_kw / mean;
  for (double& v : out.load[mg_index]) v *= factor;
  return out;
}

void PpoHyper::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("ppo: gamma must lie in [0,1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0))
    throw std::invalid_argument("ppo: gae_lambda must lie in [0,1]");
  if (!(clip_eps > 0.0)) throw std::invalid_argument("ppo: clip_eps must be > 0");
  if (epochs_per_update < 1 || episodes_per_epoch < 1)
    throw std::invalid_argument("ppo: pass/episode counts must be >= 1");
}

int FedSchedule::rounds() const {
  return (total_epochs + local_epochs_per_round - 1) / local_epochs_per_round;
}

int FedSchedule::epochs_in_round(int round) const {
  int done = round * local_epochs_per_round;
  return std::min(local_epochs_per_round, total_epochs - done);
}

void FedSchedule::validate() const {
  if (local_epochs_per_round < 1) throw std::invalid_argument("schedule: N_i must be >= 1");
  if (total_epochs < local_epochs_per_round)
    throw std::invalid_argument("schedule: N_e must be >= N_i");
}

void MmgConfig::validate() const {
  if (devices.empty()) throw std::invalid_argument("config: need at least one MG");
  for (const auto& mg : devices) {
    mg.cg.validate();
    mg.ba.validate();
  }
  loss.validate();
  ppo.validate();
  schedule.validate();
  if (!(initial_soc >= 0.0 && initial_soc <= 1.0))
    throw std::invalid_argument("config: initial_soc must lie in [0,1]");
}

namespace {

using nlohmann::json;

void read_if(const json& j, const char* key, double& out) {
  if (j.contains(key)) out = j.at(key).get<double>();
}
void read_if(const json& j, const char* key, int& out) {
  if (j.contains(key)) out = j.at(key).get<int>();
}
void read_if(const json& j, const char* key, bool& out) {
  if (j.contains(key)) out = j.at(key).get<bool>();
}
void read_if(const json& j, const char* key, std::uint64_t& out) {
  if (j.contains(key)) out = j.at(key).get<std::uint64_t>();
}
void read_if(const json& j, const char* key, std::vector<int>& out) {
  if (j.contains(key)) out = j.at(key).get<std::vector<int>>();
}

MgDevices device_from_json(const json& j) {
  MgDevices mg;
  if (j.contains("cg")) {
    const json& c = j.at("cg");
    read_if(c, "a", mg.cg.a);
    read_if(c, "b", mg.cg.b);
    read_if(c, "c", mg.cg.c);
    read_if(c, "p_min", mg.cg.p_min);
    read_if(c, "p_max", mg.cg.p_max);
  }
  if (j.contains("ba")) {
    const json& b = j.at("ba");
    read_if(b, "a", mg.ba.a);
    read_if(b, "b", mg.ba.b);
    read_if(b, "c", mg.ba.c);
    read_if(b, "p_min", mg.ba.p_min);
    read_if(b, "p_max", mg.ba.p_max);
    read_if(b, "capacity", mg.ba.capacity);
    read_if(b, "eta_ch", mg.ba.eta_ch);
    read_if(b, "eta_dch", mg.ba.eta_dch);
    read_if(b, "delta", mg.ba.delta);
    read_if(b, "soc_min", mg.ba.soc_min);
    read_if(b, "soc_max", mg.ba.soc_max);
  }
  read_if(j, "has_wind", mg.has_wind);
  read_if(j, "has_pv", mg.has_pv);
  return mg;
}

json device_to_json(const MgDevices& mg) {
  return json{{"cg",
               {{"a", mg.cg.a}, {"b", mg.cg.b}, {"c", mg.cg.c}, {"p_min", mg.cg.p_min},
                {"p_max", mg.cg.p_max}}},
              {"ba",
               {{"a", mg.ba.a}, {"b", mg.ba.b}, {"c", mg.ba.c}, {"p_min", mg.ba.p_min},
                {"p_max", mg.ba.p_max}, {"capacity", mg.ba.capacity}, {"eta_ch", mg.ba.eta_ch},
                {"eta_dch", mg.ba.eta_dch}, {"delta", mg.ba.delta}, {"soc_min", mg.ba.soc_min},
                {"soc_max", mg.ba.soc_max}}},
              {"has_wind", mg.has_wind},
              {"has_pv", mg.has_pv}};
}

}  // namespace

MmgConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  json j = json::parse(in, nullptr, true, /*ignore_comments=*/true);

  MmgConfig cfg;
  if (j.contains("devices")) {
    cfg.devices.clear();
    for (const auto& d : j.at("devices")) cfg.devices.push_back(device_from_json(d));
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    read_if(l, "cg", cfg.loss.cg);
    read_if(l, "reg", cfg.loss.reg);
    read_if(l, "ba", cfg.loss.ba);
  }
  read_if(j, "w_cost", cfg.w_cost);
  read_if(j, "w_deviation", cfg.w_deviation);
  read_if(j, "initial_soc", cfg.initial_soc);
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    read_if(n, "wind_pv_std", cfg.noise.wind_pv_std);
    read_if(n, "load_std", cfg.noise.load_std);
    read_if(n, "seed", cfg.noise.seed);
  }
  if (j.contains("ppo")) {
    const json& p = j.at("ppo");
    read_if(p, "gamma", cfg.ppo.gamma);
    read_if(p, "gae_lambda", cfg.ppo.gae_lambda);
    read_if(p, "clip_eps", cfg.ppo.clip_eps);
    read_if(p, "lr_actor", cfg.ppo.lr_actor);
    read_if(p, "lr_critic", cfg.ppo.lr_critic);
    read_if(p, "lr_log_std", cfg.ppo.lr_log_std);
    read_if(p, "epochs_per_update", cfg.ppo.epochs_per_update);
    read_if(p, "episodes_per_epoch", cfg.ppo.episodes_per_epoch);
    read_if(p, "normalize_advantages", cfg.ppo.normalize_advantages);
    read_if(p, "faithful_critic", cfg.ppo.faithful_critic);
    read_if(p, "init_log_std", cfg.ppo.init_log_std);
    read_if(p, "critic_output_scale", cfg.ppo.critic_output_scale);
    read_if(p, "min_log_std", cfg.ppo.min_log_std);
    read_if(p, "max_log_std", cfg.ppo.max_log_std);
  }
  if (j.contains("federation")) {
    const json& f = j.at("federation");
    read_if(f, "total_epochs", cfg.schedule.total_epochs);
    read_if(f, "local_epochs_per_round", cfg.schedule.local_epochs_per_round);
    read_if(f, "aggregate_enabled", cfg.schedule.aggregate_enabled);
    read_if(f, "upload_timeout_s", cfg.schedule.upload_timeout_s);
    if (f.contains("weights")) {
      std::string mode = f.at("weights").get<std::string>();
      if (mode == "uniform") {
        cfg.schedule.mode = AggregationMode::kUniform;
      } else if (mode == "data-weighted") {
        cfg.schedule.mode = AggregationMode::kDataWeighted;
      } else {
        throw std::runtime_error("config: unknown aggregation weights mode '" + mode + "'");
      }
    }
  }
  read_if(j, "actor_hidden", cfg.actor_hidden);
  read_if(j, "critic_hidden", cfg.critic_hidden);
  read_if(j, "obs_power_scale", cfg.obs_power_scale);
  read_if(j, "obs_price_scale", cfg.obs_price_scale);
  read_if(j, "eval_episodes", cfg.eval_episodes);

  cfg.validate();
  return cfg;
}

std::string config_to_json(const MmgConfig& config) {
  json devices = json::array();
  for (const auto& mg : config.devices) devices.push_back(device_to_json(mg));
  json j{
      {"devices", devices},
      {"loss", {{"cg", config.loss.cg}, {"reg", config.loss.reg}, {"ba", config.loss.ba}}},
      {"w_cost", config.w_cost},
      {"w_deviation", config.w_deviation},
      {"initial_soc", config.initial_soc},
      {"noise",
       {{"wind_pv_std", config.noise.wind_pv_std}, {"load_std", config.noise.load_std},
        {"seed", config.noise.seed}}},
      {"ppo",
       {{"gamma", config.ppo.gamma}, {"gae_lambda", config.ppo.gae_lambda},
        {"clip_eps", config.ppo.clip_eps}, {"lr_actor", config.ppo.lr_actor},
        {"lr_critic", config.ppo.lr_critic}, {"lr_log_std", config.ppo.lr_log_std},
        {"epochs_per_update", config.ppo.epochs_per_update},
        {"episodes_per_epoch", config.ppo.episodes_per_epoch},
        {"normalize_advantages", config.ppo.normalize_advantages},
        {"critic_output_scale", config.ppo.critic_output_scale},
        {"faithful_critic", config.ppo.faithful_critic}}},
      {"federation",
       {{"total_epochs", config.schedule.total_epochs},
        {"local_epochs_per_round", config.schedule.local_epochs_per_round},
        {"aggregate_enabled", config.schedule.aggregate_enabled},
        {"weights",
         config.schedule.mode == AggregationMode::kUniform ? "uniform" : "data-weighted"}}},
      {"actor_hidden", config.actor_hidden},
      {"critic_hidden", config.critic_hidden},
      {"obs_power_scale", config.obs_power_scale},
      {"obs_price_scale", config.obs_price_scale},
      {"eval_episodes", config.eval_episodes},
  };
  return j.dump(2);
}

}  // namespace fedgrid
