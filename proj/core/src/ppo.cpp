#include "fedgrid/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedgrid {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727417803297;  // 0.5*ln(2*pi)
constexpr double kTanhGuard = 1e-9;
}  // namespace

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double gamma, double lambda) {
  if (values.size() != rewards.size() + 1) {
    throw std::invalid_argument("gae: values must have one more entry than rewards");
  }
  std::size_t n = rewards.size();
  std::vector<double> advantages(n, 0.0);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    double delta = rewards[i] + gamma * values[i + 1] - values[i];
    running = delta + gamma * lambda * running;
    advantages[i] = running;
  }
  return advantages;
}

GaussianPolicy::GaussianPolicy(const MlpSpec& mean_net, std::span<const double> params,
                               double min_log_std, double max_log_std)
    : spec_(mean_net), params_(params), min_log_std_(min_log_std), max_log_std_(max_log_std) {
  if (params.size() != param_count(mean_net)) {
    throw std::invalid_argument("GaussianPolicy: param block size mismatch");
  }
}

GaussianPolicy::Sample GaussianPolicy::sample(std::span<const double> obs, Rng& rng) const {
  int n_act = spec_.output_size();
  std::vector<double> mu;
  mlp_forward(spec_, params_.subspan(0, spec_.param_count()), obs, mu);

  Sample s;
  s.presquash.resize(n_act);
  s.action.resize(n_act);
  const double* log_std = params_.data() + spec_.param_count();
  for (int i = 0; i < n_act; ++i) {
    double ls = std::clamp(log_std[i], min_log_std_, max_log_std_);
    s.presquash[i] = mu[i] + std::exp(ls) * rng.normal();
    s.action[i] = std::tanh(s.presquash[i]);
  }
  s.log_prob = log_prob(obs, s.presquash);
  return s;
}

std::vector<double> GaussianPolicy::mean_action(std::span<const double> obs) const {
  std::vector<double> mu;
  mlp_forward(spec_, params_.subspan(0, spec_.param_count()), obs, mu);
  for (double& v : mu) v = std::tanh(v);
  return mu;
}

double GaussianPolicy::log_prob(std::span<const double> obs,
                                std::span<const double> presquash) const {
  int n_act = spec_.output_size();
  if (presquash.size() != static_cast<std::size_t>(n_act)) {
    throw std::invalid_argument("log_prob: presquash size mismatch");
  }
  std::vector<double> mu;
  mlp_forward(spec_, params_.subspan(0, spec_.param_count()), obs, mu);
  const double* log_std = params_.data() + spec_.param_count();
  double lp = 0.0;
  for (int i = 0; i < n_act; ++i) {
    double ls = std::clamp(log_std[i], min_log_std_, max_log_std_);
    double sigma = std::exp(ls);
    double z = (presquash[i] - mu[i]) / sigma;
    double a = std::tanh(presquash[i]);
    lp += -0.5 * z * z - ls - kHalfLog2Pi;
    lp -= std::log(1.0 - a * a + kTanhGuard);  // tanh change of variables
  }
  return lp;
}

void GaussianPolicy::log_prob_backward(std::span<const double> obs,
                                       std::span<const double> presquash, double coeff,
                                       std::span<double> grad) const {
  if (grad.size() != params_.size()) {
    throw std::invalid_argument("log_prob_backward: grad size mismatch");
  }
  int n_act = spec_.output_size();
  std::vector<double> mu;
  MlpWorkspace ws;
  mlp_forward(spec_, params_.subspan(0, spec_.param_count()), obs, mu, &ws);
  const double* log_std = params_.data() + spec_.param_count();

  std::vector<double> mu_grad(n_act);
  for (int i = 0; i < n_act; ++i) {
    double ls = std::clamp(log_std[i], min_log_std_, max_log_std_);
    double sigma = std::exp(ls);
    double z = (presquash[i] - mu[i]) / sigma;
    mu_grad[i] = coeff * z / sigma;
    grad[spec_.param_count() + i] += coeff * (z * z - 1.0);
  }
  mlp_backward(spec_, params_.subspan(0, spec_.param_count()), ws, mu_grad,
               grad.subspan(0, spec_.param_count()));
}

void RolloutBuffer::clear() {
  obs.clear();
  next_obs.clear();
  presquash.clear();
  rewards.clear();
  old_log_probs.clear();
  values.clear();
  terminal.clear();
  advantages.clear();
  td_targets.clear();
}

void RolloutBuffer::compute_advantages(double gamma, double lambda, bool normalize) {
  std::size_t n = size();
  advantages.assign(n, 0.0);
  td_targets.assign(n, 0.0);

  std::size_t start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool end_of_episode = terminal[i] || i + 1 == n;
    td_targets[i] = rewards[i] + (terminal[i] ? 0.0 : gamma * (i + 1 < n ? values[i + 1] : 0.0));
    if (!end_of_episode) continue;

    std::size_t len = i + 1 - start;
    std::vector<double> v(len + 1);
    for (std::size_t k = 0; k < len; ++k) v[k] = values[start + k];
    v[len] = 0.0;  // finite-horizon bootstrap
    std::vector<double> adv =
        gae(std::span<const double>(rewards.data() + start, len), v, gamma, lambda);
    std::copy(adv.begin(), adv.end(), advantages.begin() + start);
    start = i + 1;
  }

  if (normalize && n > 1) {
    double mean = 0.0;
    for (double a : advantages) mean += a;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double a : advantages) var += (a - mean) * (a - mean);
    double stddev = std::sqrt(var / static_cast<double>(n));
    if (stddev > 1e-8) {
      // Batch standardization (mean 0, std 1). Centering is load-bearing:
      // the raw physics rewards are all negative at the 1e3 scale, and
      // uncentered advantages would push every sampled action down.
      for (double& a : advantages) a = (a - mean) / stddev;
    }
  }
}

LossResult actor_loss(const MlpSpec& actor_spec, std::span<const double> actor_params,
                      const PpoHyper& hyper, const RolloutBuffer& batch) {
  if (batch.advantages.size() != batch.size()) {
    throw std::invalid_argument("actor_loss: advantages not computed");
  }
  GaussianPolicy policy(actor_spec, actor_params, hyper.min_log_std, hyper.max_log_std);
  LossResult result;
  result.grad.assign(actor_params.size(), 0.0);
  std::size_t n = batch.size();
  if (n == 0) return result;

  double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double logp_new = policy.log_prob(batch.obs[i], batch.presquash[i]);
    double ratio = std::exp(logp_new - batch.old_log_probs[i]);
    if (!std::isfinite(ratio)) throw std::domain_error("actor_loss: non-finite ratio");
    double a = batch.advantages[i];
    double unclipped = ratio * a;
    double clipped = std::clamp(ratio, 1.0 - hyper.clip_eps, 1.0 + hyper.clip_eps) * a;
    result.loss += inv_n * std::min(unclipped, clipped);
    // Gradient flows only when the unclipped branch is the active minimum
    // (inside the clip band both branches coincide).
    if (unclipped <= clipped) {
      policy.log_prob_backward(batch.obs[i], batch.presquash[i], inv_n * a * ratio, result.grad);
    }
  }
  return result;
}

LossResult critic_loss(const MlpSpec& critic_spec, std::span<const double> critic_params,
                       const PpoHyper& hyper, const RolloutBuffer& batch) {
  LossResult result;
  result.grad.assign(critic_params.size(), 0.0);
  std::size_t n = batch.size();
  if (n == 0) return result;

  double inv_n = 1.0 / static_cast<double>(n);
  double gain = hyper.critic_output_scale;
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) {
    MlpWorkspace ws_s;
    mlp_forward(critic_spec, critic_params, batch.obs[i], out, &ws_s);
    double v_s = gain * out[0];

    double v_next = 0.0;
    MlpWorkspace ws_next;
    bool bootstrap = !batch.terminal[i];
    if (bootstrap) {
      mlp_forward(critic_spec, critic_params, batch.next_obs[i], out, &ws_next);
      v_next = gain * out[0];
    }

    double err = hyper.gamma * v_next + batch.rewards[i] - v_s;
    result.loss += inv_n * err * err;

    double og_s[1] = {-2.0 * inv_n * err * gain};
    mlp_backward(critic_spec, critic_params, ws_s, og_s, result.grad);
    if (hyper.faithful_critic && bootstrap) {
      double og_next[1] = {2.0 * inv_n * err * hyper.gamma * gain};
      mlp_backward(critic_spec, critic_params, ws_next, og_next, result.grad);
    }
  }
  return result;
}

MicrogridRolloutEnv::MicrogridRolloutEnv(MicrogridEnv env, ScenarioDay scenario)
    : env_(std::move(env)), scenario_(std::move(scenario)) {}

std::vector<double> MicrogridRolloutEnv::reset(std::uint64_t episode_seed) {
  state_ = env_.reset(scenario_, episode_seed);
  hour_ = 0;
  return env_.observe(state_);
}

RolloutEnvironment::Step MicrogridRolloutEnv::step(std::span<const double> action_norm) {
  if (hour_ >= kHoursPerDay) throw std::logic_error("step past episode end; call reset");
  ++hour_;
  MgAction action = env_.to_physical(action_norm);
  StepOutcome outcome = env_.step(state_, action, hour_);
  state_ = outcome.next_state;

  Step s;
  s.observation = env_.observe(state_);
  s.reward = outcome.reward;
  s.done = hour_ == kHoursPerDay;
  s.abs_deviation = std::abs(outcome.deviation);
  s.cost_cg = outcome.cost_cg;
  s.cost_ba = outcome.cost_ba;
  return s;
}

PpoAgent PpoAgent::create(int obs_size, int n_action, const std::vector<int>& actor_hidden,
                          const std::vector<int>& critic_hidden, const PpoHyper& hyper,
                          std::uint64_t init_seed) {
  PpoAgent agent;
  agent.hyper = hyper;
  agent.actor_spec.layer_sizes.push_back(obs_size);
  for (int h : actor_hidden) agent.actor_spec.layer_sizes.push_back(h);
  agent.actor_spec.layer_sizes.push_back(n_action);
  agent.critic_spec.layer_sizes.push_back(obs_size);
  for (int h : critic_hidden) agent.critic_spec.layer_sizes.push_back(h);
  agent.critic_spec.layer_sizes.push_back(1);
  agent.actor_spec.validate();
  agent.critic_spec.validate();

  // Near-zero heads: the initial policy sits at the neutral midpoint and the
  // initial value estimate starts flat instead of at a random offset.
  agent.actor_params = mlp_init(agent.actor_spec, seed_chain(init_seed, {1}), 0.01);
  agent.actor_params.resize(agent.actor_params.size() + n_action, hyper.init_log_std);
  agent.critic_params = mlp_init(agent.critic_spec, seed_chain(init_seed, {2}), 0.01);

  agent.adam_actor = AdamState(agent.actor_spec.param_count(), hyper.lr_actor);
  agent.adam_log_std = AdamState(n_action, hyper.lr_log_std);
  agent.adam_critic = AdamState(agent.critic_params.size(), hyper.lr_critic);
  return agent;
}

ParamLayout PpoAgent::layout() const {
  return ParamLayout{actor_spec, critic_spec, actor_spec.output_size()};
}

ParamVector PpoAgent::params() const { return flatten(layout(), actor_params, critic_params); }

void PpoAgent::set_params(const ParamVector& pv, bool reset_optimizer) {
  unflatten(layout(), pv, actor_params, critic_params);
  if (reset_optimizer) {
    adam_actor.reset();
    adam_log_std.reset();
    adam_critic.reset();
  }
}

GaussianPolicy PpoAgent::policy() const {
  return GaussianPolicy(actor_spec, actor_params, hyper.min_log_std, hyper.max_log_std);
}

double PpoAgent::value(std::span<const double> obs) const {
  std::vector<double> out;
  mlp_forward(critic_spec, critic_params, obs, out);
  return hyper.critic_output_scale * out[0];
}

PolicyFn make_sampling_policy(const PpoAgent& agent, const MicrogridEnv& env, Rng& rng) {
  return [&agent, &env, &rng](const MgState& state) {
    std::vector<double> obs = env.observe(state);
    GaussianPolicy::Sample s = agent.policy().sample(obs, rng);
    PolicyDecision d;
    d.action_norm = std::move(s.action);
    d.presquash = std::move(s.presquash);
    d.log_prob = s.log_prob;
    d.value = agent.value(obs);
    return d;
  };
}

PolicyFn make_mean_policy(const PpoAgent& agent, const MicrogridEnv& env) {
  return [&agent, &env](const MgState& state) {
    std::vector<double> obs = env.observe(state);
    PolicyDecision d;
    d.action_norm = agent.policy().mean_action(obs);
    d.presquash.assign(d.action_norm.size(), 0.0);
    for (std::size_t i = 0; i < d.action_norm.size(); ++i) {
      d.presquash[i] = std::atanh(std::clamp(d.action_norm[i], -0.999999999999, 0.999999999999));
    }
    d.log_prob = agent.policy().log_prob(obs, d.presquash);
    d.value = agent.value(obs);
    return d;
  };
}

LocalUpdateResult local_update(PpoAgent& agent, RolloutEnvironment& env, int n_epochs,
                               std::uint64_t seed) {
  LocalUpdateResult result;
  if (n_epochs <= 0) return result;

  Rng rng(seed);
  RolloutBuffer buffer;
  const PpoHyper& hyper = agent.hyper;
  std::size_t mlp_count = agent.actor_spec.param_count();
  int n_act = agent.actor_spec.output_size();

  for (int epoch = 0; epoch < n_epochs; ++epoch) {
    buffer.clear();
    double reward_sum = 0.0;
    double abs_dev_sum = 0.0, cost_cg_sum = 0.0, cost_ba_sum = 0.0;
    std::size_t step_count = 0;

    for (int ep = 0; ep < hyper.episodes_per_epoch; ++ep) {
      std::vector<double> obs = env.reset(rng.next_u64());
      bool done = false;
      while (!done) {
        GaussianPolicy::Sample s = agent.policy().sample(obs, rng);
        double value = agent.value(obs);
        RolloutEnvironment::Step step = env.step(s.action);

        buffer.obs.push_back(obs);
        buffer.next_obs.push_back(step.observation);
        buffer.presquash.push_back(std::move(s.presquash));
        buffer.rewards.push_back(step.reward);
        buffer.old_log_probs.push_back(s.log_prob);
        buffer.values.push_back(value);
        buffer.terminal.push_back(step.done ? 1 : 0);

        reward_sum += step.reward;
        abs_dev_sum += step.abs_deviation;
        cost_cg_sum += step.cost_cg;
        cost_ba_sum += step.cost_ba;
        ++step_count;
        obs = std::move(step.observation);
        done = step.done;
      }
    }
    result.transitions_collected += static_cast<std::int64_t>(step_count);

    buffer.compute_advantages(hyper.gamma, hyper.gae_lambda, hyper.normalize_advantages);

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_episode_reward = reward_sum / hyper.episodes_per_epoch;
    stats.mean_abs_deviation = abs_dev_sum / static_cast<double>(step_count);
    stats.mean_cost_cg = cost_cg_sum / static_cast<double>(step_count);
    stats.mean_cost_ba = cost_ba_sum / static_cast<double>(step_count);

    for (int pass = 0; pass < hyper.epochs_per_update; ++pass) {
      LossResult al = actor_loss(agent.actor_spec, agent.actor_params, hyper, buffer);
      if (!std::isfinite(al.loss)) {
        throw std::runtime_error("local_update: actor loss diverged at epoch " +
                                 std::to_string(epoch));
      }
      for (double& g : al.grad) g = -g;  // maximize the surrogate
      adam_step(agent.adam_actor, std::span<double>(agent.actor_params).subspan(0, mlp_count),
                std::span<const double>(al.grad).subspan(0, mlp_count));
      adam_step(agent.adam_log_std, std::span<double>(agent.actor_params).subspan(mlp_count),
                std::span<const double>(al.grad).subspan(mlp_count));
      for (int i = 0; i < n_act; ++i) {
        double& ls = agent.actor_params[mlp_count + i];
        ls = std::clamp(ls, hyper.min_log_std, hyper.max_log_std);
      }

      LossResult cl = critic_loss(agent.critic_spec, agent.critic_params, hyper, buffer);
      if (!std::isfinite(cl.loss)) {
        throw std::runtime_error("local_update: critic loss diverged at epoch " +
                                 std::to_string(epoch));
      }
      adam_step(agent.adam_critic, agent.critic_params, cl.grad);

      if (pass == 0) {
        stats.actor_loss = al.loss;
        stats.critic_loss = cl.loss;
      }
    }
    result.epochs.push_back(stats);
  }
  return result;
}

double evaluate_policy(const PpoAgent& agent, MicrogridEnv& env, const ScenarioDay& day,
                       int n_episodes, std::uint64_t seed_base) {
  double total = 0.0;
  for (int k = 0; k < n_episodes; ++k) {
    Rng action_rng(seed_chain(seed_base, {static_cast<std::uint64_t>(k), 1}));
    auto result = env.run_episode(make_sampling_policy(agent, env, action_rng), day,
                                  seed_chain(seed_base, {static_cast<std::uint64_t>(k), 0}));
    total += result.total_reward;
  }
  return total / n_episodes;
}

}  // namespace fedgrid
