// Command-line front end: federated training, policy evaluation, dispatch
// schedule export, inter-MG settlement runs and the convergence checks, all
// driven by one JSON config document.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "fedgrid/convergence_lab.hpp"
#include "fedgrid/csv.hpp"
#include "fedgrid/federation.hpp"
#include "fedgrid/mmg_market.hpp"
#include "fedgrid/ppo.hpp"
#include "fedgrid/scenario.hpp"

namespace fs = std::filesystem;
using namespace fedgrid;

namespace {

ScenarioDay resolve_scenario(const std::string& spec) {
  if (spec.empty() || spec == "default") return default_scenario();
  return load_scenario(spec);
}

MmgConfig resolve_config(const std::string& path) {
  if (path.empty()) return MmgConfig{};
  return load_config(path);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    seeds.push_back(std::stoull(text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  if (seeds.empty()) throw CLI::ValidationError("--seeds", "need at least one seed");
  return seeds;
}

std::string seed_header(std::uint64_t seed, const std::string& scenario) {
  return "global_seed=" + std::to_string(seed) + " scenario=" +
         (scenario.empty() ? std::string("default") : scenario) +
         " seed_hierarchy=hash(global_seed, tag, agent, ...)";
}

void write_curves(const fs::path& dir, const TrainingResult& result, std::uint64_t seed,
                  const std::string& scenario_name) {
  for (std::size_t j = 0; j < result.curves.size(); ++j) {
    CsvWriter out((dir / ("training_agent" + std::to_string(j) + ".csv")).string());
    out.comment(seed_header(seed, scenario_name) + " agent=" + std::to_string(j));
    out.row({"epoch", "mean_episode_reward", "actor_loss", "critic_loss", "mean_abs_deviation",
             "mean_cost_cg", "mean_cost_ba"});
    for (const auto& e : result.curves[j]) {
      out.numeric_row({static_cast<double>(e.epoch + 1), e.mean_episode_reward, e.actor_loss,
                       e.critic_loss, e.mean_abs_deviation, e.mean_cost_cg, e.mean_cost_ba});
    }
  }
}

void write_rounds(const fs::path& dir, const TrainingResult& result, std::uint64_t seed,
                  const std::string& scenario_name) {
  CsvWriter out((dir / "rounds.csv").string());
  out.comment(seed_header(seed, scenario_name));
  out.row({"round", "agent", "eval_pre", "eval_post", "upload_norm", "global_norm",
           "agent_round", "wall_clock_ms"});
  for (const auto& r : result.rounds) {
    for (std::size_t j = 0; j < r.eval_pre.size(); ++j) {
      out.numeric_row({static_cast<double>(r.round), static_cast<double>(j), r.eval_pre[j],
                       r.eval_post[j], r.upload_norm[j], r.global_norm,
                       static_cast<double>(r.agent_rounds[j]), r.wall_clock_ms});
    }
  }
}

void write_checkpoints(const fs::path& dir, const TrainingResult& result) {
  for (std::size_t j = 0; j < result.agents.size(); ++j) {
    const PpoAgent& agent = result.agents[j];
    save_checkpoint((dir / ("agent_" + std::to_string(j) + ".ckpt")).string(), agent.layout(),
                    agent.params(), agent.adam_actor.step);
  }
  if (!result.agents.empty()) {
    save_checkpoint((dir / "global.ckpt").string(), result.agents[0].layout(),
                    result.final_global, 0);
  }
}

PpoAgent agent_from_checkpoint(const MmgConfig& config, const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  PpoAgent agent = make_agent(config, 0);
  if (agent.layout().hash() != ck.layout.hash()) {
    throw std::runtime_error("checkpoint '" + path +
                             "' topology does not match the configured networks");
  }
  agent.set_params(ck.params, true);
  return agent;
}

double mg_capacity(const MmgConfig& config, int mg) {
  return config.devices[mg].cg.p_max + config.devices[mg].ba.p_max;
}

struct EvalModes {
  bool self_sufficient = false;
  bool self_insufficient = false;
  bool as_trained = false;
};

EvalModes parse_mode(const std::string& mode) {
  EvalModes m;
  if (mode == "both") {
    m.self_sufficient = m.self_insufficient = true;
  } else if (mode == "self-sufficient") {
    m.self_sufficient = true;
  } else if (mode == "self-insufficient") {
    m.self_insufficient = true;
  } else if (mode == "trained") {
    m.as_trained = true;
  } else {
    throw CLI::ValidationError("--mode", "unknown mode '" + mode + "'");
  }
  return m;
}

int cmd_train(const std::string& config_path, const std::string& scenario_path,
              const std::string& seeds_text, const std::string& out_dir, bool local_only,
              int rounds_override, int local_epochs_override, const std::string& serve_addr,
              const std::string& join_addr, int agent_id) {
  MmgConfig config = resolve_config(config_path);
  if (local_epochs_override > 0) config.schedule.local_epochs_per_round = local_epochs_override;
  if (rounds_override > 0) {
    config.schedule.total_epochs = rounds_override * config.schedule.local_epochs_per_round;
  }
  if (local_only) config.schedule.aggregate_enabled = false;
  config.validate();

  ScenarioDay scenario = resolve_scenario(scenario_path);
  std::vector<std::uint64_t> seeds = parse_seeds(seeds_text);

  if (!join_addr.empty()) {
    if (agent_id < 0 || agent_id >= config.mg_count()) {
      std::cerr << "error: --join requires --agent in [0, " << config.mg_count() - 1 << "]\n";
      return 2;
    }
    run_participant(config, scenario, join_addr, agent_id, seeds[0]);
    std::cout << "participant " << agent_id << " finished\n";
    return 0;
  }

  for (std::uint64_t seed : seeds) {
    fs::path dir = fs::path(out_dir) / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);

    TrainingResult result;
    if (!serve_addr.empty()) {
      FedServer server(serve_addr, config);
      std::cout << "serving on port " << server.port() << ", waiting for " << config.mg_count()
                << " participants\n";
      result = server.run(scenario, seed);
      // Server mode keeps only the rounds; final agents live at the
      // participants.
      write_rounds(dir, result, seed, scenario_path);
      if (!result.final_global.values.empty()) {
        save_checkpoint((dir / "global.ckpt").string(), make_agent(config, 0).layout(),
                        result.final_global, 0);
      }
    } else {
      result = run_training(config, scenario, seed);
      write_curves(dir, result, seed, scenario_path);
      write_rounds(dir, result, seed, scenario_path);
      write_checkpoints(dir, result);
    }

    {
      std::ofstream cfg(dir / "config.json");
      cfg << config_to_json(config) << "\n";
    }
    std::cout << "seed " << seed << ": " << result.rounds.size() << " rounds -> " << dir.string()
              << "\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& scenario_path,
                 const std::string& federated_dir, const std::string& local_dir,
                 const std::string& mode_text, std::uint64_t seed, int episodes,
                 const std::string& out_path) {
  MmgConfig config = resolve_config(config_path);
  ScenarioDay scenario = resolve_scenario(scenario_path);
  EvalModes modes = parse_mode(mode_text);
  if (episodes <= 0) episodes = config.eval_episodes;
  int n = config.mg_count();

  auto load_set = [&](const std::string& dir) {
    std::vector<PpoAgent> agents;
    for (int j = 0; j < n; ++j) {
      agents.push_back(agent_from_checkpoint(
          config, (fs::path(dir) / ("agent_" + std::to_string(j) + ".ckpt")).string()));
    }
    return agents;
  };

  std::vector<PpoAgent> federated = load_set(federated_dir);
  std::vector<PpoAgent> local;
  bool have_local = !local_dir.empty();
  if (have_local) local = load_set(local_dir);

  struct Row {
    std::string state;
    int agent;
    double fed;
    double fed_noisy;
    double loc;
    double loc_noisy;
  };
  std::vector<Row> rows;

  auto eval_mode = [&](const std::string& label, double capacity_fraction, bool scale) {
    for (int j = 0; j < n; ++j) {
      ScenarioDay day = scenario;
      if (scale) day = scale_load_mean(scenario, j, capacity_fraction * mg_capacity(config, j));
      MicrogridEnv noise_free = make_eval_env(config, j);
      MicrogridEnv noisy = make_env(config, j);
      Row row;
      row.state = label;
      row.agent = j;
      row.fed = evaluate_policy(federated[j], noise_free, day, episodes, eval_seed(seed, j));
      row.fed_noisy = evaluate_policy(federated[j], noisy, day, episodes, eval_seed(seed, j));
      row.loc = have_local
                    ? evaluate_policy(local[j], noise_free, day, episodes, eval_seed(seed, j))
                    : 0.0;
      row.loc_noisy =
          have_local ? evaluate_policy(local[j], noisy, day, episodes, eval_seed(seed, j)) : 0.0;
      rows.push_back(row);
    }
  };

  if (modes.as_trained) eval_mode("as-trained", 0.0, false);
  if (modes.self_sufficient) eval_mode("self-sufficient", 0.7, true);
  if (modes.self_insufficient) eval_mode("self-insufficient", 1.3, true);

  // One row per MG per working state; the federated column precedes the
  // local-only baseline.
  std::printf("%-18s %-6s %14s", "working_state", "agent", "f_madrl");
  if (have_local) std::printf(" %14s", "ppo_madrl");
  std::printf("\n");
  for (const auto& r : rows) {
    std::printf("%-18s MG%-4d %14.2f", r.state.c_str(), r.agent + 1, r.fed);
    if (have_local) std::printf(" %14.2f", r.loc);
    std::printf("\n");
  }

  if (!out_path.empty()) {
    CsvWriter out(out_path);
    out.comment(seed_header(seed, scenario_path) + " episodes=" + std::to_string(episodes));
    std::vector<std::string> header = {"working_state", "agent", "f_madrl", "f_madrl_noisy"};
    if (have_local) {
      header.push_back("ppo_madrl");
      header.push_back("ppo_madrl_noisy");
    }
    out.row(header);
    for (const auto& r : rows) {
      std::vector<std::string> cells = {r.state, std::to_string(r.agent + 1),
                                        format_double(r.fed), format_double(r.fed_noisy)};
      if (have_local) {
        cells.push_back(format_double(r.loc));
        cells.push_back(format_double(r.loc_noisy));
      }
      out.row(cells);
    }
  }
  return 0;
}

int cmd_schedule(const std::string& config_path, const std::string& scenario_path,
                 const std::string& checkpoint, int mg, const std::string& out_path) {
  MmgConfig config = resolve_config(config_path);
  if (mg < 0 || mg >= config.mg_count()) {
    std::cerr << "error: --mg must lie in [0, " << config.mg_count() - 1 << "]\n";
    return 2;
  }
  ScenarioDay scenario = resolve_scenario(scenario_path);
  PpoAgent agent = agent_from_checkpoint(config, checkpoint);

  MicrogridEnv env = make_eval_env(config, mg);
  auto episode = env.run_episode(make_mean_policy(agent, env), scenario, 0);
  MicrogridEnv::export_trace(out_path, episode.outcomes);
  std::cout << "wrote 24-hour schedule for MG" << mg + 1 << " to " << out_path << "\n";
  return 0;
}

int cmd_settlements(const std::string& scenario_path, const std::vector<std::string>& schedules,
                    const std::string& out_path) {
  ScenarioDay scenario = resolve_scenario(scenario_path);
  if (schedules.empty()) {
    std::cerr << "error: need at least one schedule CSV\n";
    return 2;
  }

  // Pull the deviation column of each per-MG schedule.
  std::vector<std::vector<double>> deviations;
  for (const auto& path : schedules) {
    CsvTable table = read_csv(path);
    if (table.rows.size() != kHoursPerDay) {
      throw ParseError("schedule '" + path + "' must have 24 rows", table.rows.size(), 0);
    }
    std::size_t col = table.column_index("deviation");
    std::vector<double> series;
    for (std::size_t t = 0; t < kHoursPerDay; ++t) {
      series.push_back(parse_double_cell(table, t, col));
    }
    deviations.push_back(std::move(series));
  }

  CsvWriter out(out_path);
  out.comment(
      "settlement log: hour, buyer, seller, kw, price, cost (grid = distribution network)");
  out.row({"hour", "buyer", "seller", "kw", "price", "cost"});
  auto participant_name = [](int id) {
    return id == kGridParticipant ? std::string("grid") : "MG" + std::to_string(id + 1);
  };
  for (int t = 0; t < kHoursPerDay; ++t) {
    std::vector<double> surplus;
    for (const auto& series : deviations) surplus.push_back(-series[t]);
    std::vector<double> price_mg(deviations.size(), scenario.price_mg[t]);
    SettlementResult result = settle(surplus, price_mg, scenario.price_dpn[t]);
    for (const auto& trade : result.trades) {
      out.row({std::to_string(t + 1), participant_name(trade.buyer),
               participant_name(trade.seller), format_double(trade.kw),
               format_double(trade.price), format_double(trade.cost)});
    }
  }
  std::cout << "wrote settlement log to " << out_path << "\n";
  return 0;
}

int cmd_convergence(int n_seeds, int dim, double mu, double L, int k_max,
                    const std::string& out_path) {
  bool all_pass = true;

  std::unique_ptr<CsvWriter> csv;
  if (!out_path.empty()) {
    csv = std::make_unique<CsvWriter>(out_path);
    csv->row(
        {"seed", "max_ratio", "bound_pass", "lemma3", "descent", "iters_to_eps", "iter_bound"});
  }

  std::printf("%-6s %-12s %-7s %-7s %-8s %-14s\n", "seed", "max_ratio", "bound", "lemma3",
              "descent", "iters<=bound");
  for (int seed = 0; seed < n_seeds; ++seed) {
    QuadraticObjective obj = make_objective(dim, mu, L, static_cast<std::uint64_t>(seed));
    Rng rng(static_cast<std::uint64_t>(seed) + 1000);
    Eigen::VectorXd w0 =
        Eigen::VectorXd::NullaryExpr(dim, [&](Eigen::Index) { return rng.normal(0.0, 2.0); });
    Theorem1Report rep = check_theorem1(obj, w0, k_max);

    bool iters_ok = rep.iterations_to_eps < 0 ||
                    rep.iterations_to_eps <= static_cast<int>(std::ceil(rep.iteration_bound));
    bool pass = rep.pass && iters_ok;
    all_pass = all_pass && pass;
    std::printf("%-6d %-12.3e %-7s %-7s %-8s %-14s\n", seed, rep.max_ratio,
                rep.pass ? "PASS" : "FAIL", rep.lemma3_ok ? "PASS" : "FAIL",
                rep.descent_ok ? "PASS" : "FAIL", iters_ok ? "PASS" : "FAIL");
    if (csv) {
      csv->numeric_row({static_cast<double>(seed), rep.max_ratio, rep.pass ? 1.0 : 0.0,
                        rep.lemma3_ok ? 1.0 : 0.0, rep.descent_ok ? 1.0 : 0.0,
                        static_cast<double>(rep.iterations_to_eps), rep.iteration_bound});
    }
  }

  // Federated single-step identity on a small heterogeneous population.
  std::vector<QuadraticObjective> clients;
  for (int j = 0; j < 3; ++j) clients.push_back(make_objective(dim, mu, L, 9000 + j));
  std::vector<double> weights(3, 1.0 / 3.0);
  Eigen::VectorXd w0 = Eigen::VectorXd::Ones(dim);
  auto fed = check_federated_consistency(clients, weights, w0, 1.0 / L, 5);
  bool fed_ok = fed.single_step_residual < 1e-10;
  all_pass = all_pass && fed_ok;
  std::printf(
      "federated single-step identity: residual %.3e  %s (multi-step drift %.3e, reported "
      "only)\n",
      fed.single_step_residual, fed_ok ? "PASS" : "FAIL", fed.multi_step_drift);

  std::printf("convergence lab: %s\n", all_pass ? "PASS" : "FAIL");
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated multi-agent PPO for multi-microgrid energy management"};
  app.require_subcommand(1);

  // train
  std::string config_path, scenario_path, seeds_text = "1", out_dir = "out";
  bool local_only = false;
  int rounds_override = 0, local_epochs_override = 0, agent_id = -1;
  std::string serve_addr, join_addr;
  auto* train = app.add_subcommand("train", "Run federated (or local-only) training");
  train->add_option("--config", config_path, "JSON config file");
  train->add_option("--scenario", scenario_path, "scenario CSV ('default' = built-in day)");
  train->add_option("--seeds", seeds_text, "comma-separated global seeds");
  train->add_option("--out", out_dir, "output directory (one subdirectory per seed)");
  train->add_flag("--local-only", local_only, "disable aggregation (self-training baseline)");
  train->add_option("--rounds", rounds_override, "number of federation rounds");
  train->add_option("--local-epochs", local_epochs_override, "local epochs per round (N_i)");
  train->add_option("--serve", serve_addr, "serve aggregation over TCP on host:port");
  train->add_option("--join", join_addr, "join a remote server as a participant");
  train->add_option("--agent", agent_id, "agent index when joining");

  // evaluate
  std::string fed_dir, local_dir, mode_text = "both", eval_out;
  std::uint64_t eval_seed_opt = 1;
  int eval_episodes = 0;
  auto* evaluate = app.add_subcommand("evaluate", "Test rewards per MG and working state");
  evaluate->add_option("--config", config_path, "JSON config file");
  evaluate->add_option("--scenario", scenario_path, "scenario CSV");
  evaluate->add_option("--federated", fed_dir, "checkpoint directory (federated run)")
      ->required();
  evaluate->add_option("--local", local_dir, "checkpoint directory (local-only baseline)");
  evaluate->add_option("--mode", mode_text,
                       "both | self-sufficient | self-insufficient | trained");
  evaluate->add_option("--seed", eval_seed_opt,
                       "evaluation seed (match the training seed to reproduce training evals)");
  evaluate->add_option("--episodes", eval_episodes, "evaluation episodes per MG");
  evaluate->add_option("--out", eval_out, "write the table as CSV");

  // schedule
  std::string checkpoint_path, schedule_out = "schedule.csv";
  int mg_index = 0;
  auto* schedule = app.add_subcommand("schedule", "Export a 24-hour dispatch for one MG");
  schedule->add_option("--config", config_path, "JSON config file");
  schedule->add_option("--scenario", scenario_path, "scenario CSV");
  schedule->add_option("--checkpoint", checkpoint_path, "agent checkpoint")->required();
  schedule->add_option("--mg", mg_index, "MG index (0-based)");
  schedule->add_option("--out", schedule_out, "output CSV");

  // settlements
  std::vector<std::string> schedule_csvs;
  std::string settle_out = "settlements.csv";
  auto* settlements =
      app.add_subcommand("settlements", "Match hourly surpluses and deficits across MGs");
  settlements->add_option("--scenario", scenario_path, "scenario CSV");
  settlements->add_option("--schedules", schedule_csvs, "per-MG schedule CSVs")
      ->required()
      ->delimiter(',');
  settlements->add_option("--out", settle_out, "output CSV");

  // convergence
  int conv_seeds = 20, conv_dim = 10, conv_kmax = 200;
  double conv_mu = 1.0, conv_L = 10.0;
  std::string conv_out;
  auto* convergence =
      app.add_subcommand("convergence", "Gradient-descent rate bound checks on quadratics");
  convergence->add_option("--seeds", conv_seeds, "number of seeded objectives");
  convergence->add_option("--dim", conv_dim, "problem dimension");
  convergence->add_option("--mu", conv_mu, "strong convexity constant");
  convergence->add_option("--L", conv_L, "smoothness constant");
  convergence->add_option("--kmax", conv_kmax, "gradient descent iterations");
  convergence->add_option("--out", conv_out, "per-seed ratio CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      return cmd_train(config_path, scenario_path, seeds_text, out_dir, local_only,
                       rounds_override, local_epochs_override, serve_addr, join_addr, agent_id);
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(config_path, scenario_path, fed_dir, local_dir, mode_text,
                          eval_seed_opt, eval_episodes, eval_out);
    }
    if (schedule->parsed()) {
      return cmd_schedule(config_path, scenario_path, checkpoint_path, mg_index, schedule_out);
    }
    if (settlements->parsed()) {
      return cmd_settlements(scenario_path, schedule_csvs, settle_out);
    }
    if (convergence->parsed()) {
      return cmd_convergence(conv_seeds, conv_dim, conv_mu, conv_L, conv_kmax, conv_out);
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
