#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedgrid/approximator.hpp"
#include "fedgrid/mg_env.hpp"
#include "fedgrid/rng.hpp"
#include "fedgrid/scenario.hpp"

namespace fedgrid {

// Generalized advantage estimation: backward recursion
//   A_t = delta_t + gamma*lambda*A_{t+1},  delta_t = r_t + gamma*V(s_{t+1}) - V(s_t).
// values must hold one more entry than rewards (the bootstrap; 0 at episode
// end). Throws std::invalid_argument on length mismatch.
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                        double gamma, double lambda);

// Diagonal Gaussian over pre-squash values, tanh-squashed into [-1,1].
// Parameters are a flat block: mean-MLP parameters followed by one
// state-independent log-std entry per action dimension.
class GaussianPolicy {
 public:
  GaussianPolicy(const MlpSpec& mean_net, std::span<const double> params, double min_log_std,
                 double max_log_std);

  static std::size_t param_count(const MlpSpec& mean_net) {
    return mean_net.param_count() + mean_net.output_size();
  }

  struct Sample {
    std::vector<double> presquash;
    std::vector<double> action;  // tanh(presquash)
    double log_prob = 0.0;
  };

  Sample sample(std::span<const double> obs, Rng& rng) const;
  std::vector<double> mean_action(std::span<const double> obs) const;  // tanh(mu), no sampling

  // Log-density of the squashed action identified by its presquash value.
  double log_prob(std::span<const double> obs, std::span<const double> presquash) const;

  // Accumulates coeff * d log_prob / d params into grad.
  void log_prob_backward(std::span<const double> obs, std::span<const double> presquash,
                         double coeff, std::span<double> grad) const;

 private:
  const MlpSpec& spec_;
  std::span<const double> params_;
  double min_log_std_;
  double max_log_std_;
};

// Experience gathered between updates plus the derived learning targets.
struct RolloutBuffer {
  std::vector<std::vector<double>> obs;
  std::vector<std::vector<double>> next_obs;
  std::vector<std::vector<double>> presquash;
  std::vector<double> rewards;
  std::vector<double> old_log_probs;
  std::vector<double> values;     // critic estimates at collection time
  std::vector<std::uint8_t> terminal;  // 1 when next_obs ends the episode
  std::vector<double> advantages;
  std::vector<double> td_targets;

  std::size_t size() const { return rewards.size(); }
  void clear();

  // Fills advantages (per-episode GAE with zero terminal bootstrap) and
  // td_targets. Optionally standardizes advantages to mean 0 / std 1 per
  // batch; the affine map preserves their ordering.
  void compute_advantages(double gamma, double lambda, bool normalize);
};

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // with respect to the corresponding parameters
};

// Clipped-surrogate actor objective
//   L = mean over batch of min(ratio*A, clip(ratio, 1-eps, 1+eps)*A)
// with ratio = exp(logp_new - logp_old); advantages enter as constants.
// Returned loss/grad describe the objective to MAXIMIZE; callers feeding a
// minimizer (adam_step) must negate the gradient. Throws std::domain_error
// on non-finite ratios.
LossResult actor_loss(const MlpSpec& actor_spec, std::span<const double> actor_params,
                      const PpoHyper& hyper, const RolloutBuffer& batch);

// Mean squared TD error, to MINIMIZE:
//   L = mean (gamma*V(s') + r - V(s))^2,  terminal bootstrap 0.
// With hyper.faithful_critic the gradient also flows through V(s') exactly
// as the expression reads; otherwise the target is treated as a constant.
LossResult critic_loss(const MlpSpec& critic_spec, std::span<const double> critic_params,
                       const PpoHyper& hyper, const RolloutBuffer& batch);

// Minimal environment surface the rollout collector needs. Actions arrive
// in [-1, 1] per dimension.
class RolloutEnvironment {
 public:
  virtual ~RolloutEnvironment() = default;
  virtual int observation_size() const = 0;
  virtual int action_size() const = 0;

  struct Step {
    std::vector<double> observation;
    double reward = 0.0;
    bool done = false;
    double abs_deviation = 0.0;
    double cost_cg = 0.0;
    double cost_ba = 0.0;
  };

  virtual std::vector<double> reset(std::uint64_t episode_seed) = 0;
  virtual Step step(std::span<const double> action_norm) = 0;
};

// Adapts MicrogridEnv to the collector interface.
class MicrogridRolloutEnv : public RolloutEnvironment {
 public:
  MicrogridRolloutEnv(MicrogridEnv env, ScenarioDay scenario);

  int observation_size() const override { return env_.observation_size(); }
  int action_size() const override { return env_.action_size(); }
  std::vector<double> reset(std::uint64_t episode_seed) override;
  Step step(std::span<const double> action_norm) override;

  MicrogridEnv& env() { return env_; }
  const ScenarioDay& scenario() const { return scenario_; }

 private:
  MicrogridEnv env_;
  ScenarioDay scenario_;
  MgState state_;
  int hour_ = 0;
};

// One PPO learner: actor (policy) and critic parameters plus optimizer state.
struct PpoAgent {
  MlpSpec actor_spec;   // obs -> action means
  MlpSpec critic_spec;  // obs -> scalar value
  std::vector<double> actor_params;  // MLP params + log-std tail
  std::vector<double> critic_params;
  AdamState adam_actor;    // actor MLP block
  AdamState adam_log_std;  // log-std tail (its own learning rate)
  AdamState adam_critic;
  PpoHyper hyper;

  static PpoAgent create(int obs_size, int n_action, const std::vector<int>& actor_hidden,
                         const std::vector<int>& critic_hidden, const PpoHyper& hyper,
                         std::uint64_t init_seed);

  ParamLayout layout() const;
  ParamVector params() const;
  void set_params(const ParamVector& pv, bool reset_optimizer);

  GaussianPolicy policy() const;
  double value(std::span<const double> obs) const;
};

// PolicyFn views for MicrogridEnv::run_episode: stochastic (rng-driven) and
// deterministic (mean action). The referenced agent/env/rng must outlive the
// returned callable.
PolicyFn make_sampling_policy(const PpoAgent& agent, const MicrogridEnv& env, Rng& rng);
PolicyFn make_mean_policy(const PpoAgent& agent, const MicrogridEnv& env);

struct EpochStats {
  int epoch = 0;  // index within the local run
  double mean_episode_reward = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double mean_abs_deviation = 0.0;
  double mean_cost_cg = 0.0;
  double mean_cost_ba = 0.0;
};

struct LocalUpdateResult {
  std::vector<EpochStats> epochs;
  std::int64_t transitions_collected = 0;
};

// n_epochs of {collect rollouts -> GAE -> clipped actor + TD critic Adam
// passes}. Deterministic given (agent state, seed). Throws std::runtime_error
// with diagnostics when a loss turns non-finite.
LocalUpdateResult local_update(PpoAgent& agent, RolloutEnvironment& env, int n_epochs,
                               std::uint64_t seed);

// Mean episode reward over n_episodes on the noise-free day, actions sampled
// with per-episode seeds derived from seed_base. The single evaluation code
// path shared by training-time round reports and the evaluate command.
double evaluate_policy(const PpoAgent& agent, MicrogridEnv& env, const ScenarioDay& day,
                       int n_episodes, std::uint64_t seed_base);

}  // namespace fedgrid
