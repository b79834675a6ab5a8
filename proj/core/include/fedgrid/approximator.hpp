#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedgrid/rng.hpp"

namespace fedgrid {

// Fixed-topology multilayer perceptron: tanh hidden layers, identity output.
// Parameters live in a flat vector, per layer: weight matrix (row-major,
// out x in) followed by the bias vector.
struct MlpSpec {
  std::vector<int> layer_sizes;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  int layer_count() const { return static_cast<int>(layer_sizes.size()) - 1; }
  std::size_t param_count() const;
  void validate() const;  // >= 2 layers, all sizes >= 1
};

// Scratch holding pre- and post-activation values of one forward pass,
// consumed by mlp_backward.
struct MlpWorkspace {
  std::vector<std::vector<double>> activations;  // [0]=input, [k]=layer k output
  std::vector<std::vector<double>> pre_tanh;     // hidden pre-activations
};

void mlp_forward(const MlpSpec& spec, std::span<const double> params,
                 std::span<const double> input, std::vector<double>& output,
                 MlpWorkspace* workspace = nullptr);

// Exact reverse-mode gradients of the forward map. Accumulates (+=) into
// param_grad so batch members can share a buffer; input_grad may be null.
void mlp_backward(const MlpSpec& spec, std::span<const double> params,
                  const MlpWorkspace& workspace, std::span<const double> output_grad,
                  std::span<double> param_grad, std::span<double> input_grad = {});

// Glorot-uniform weights, zero biases, deterministic given the seed.
// final_layer_scale multiplies the output layer's weights; policy and value
// heads start near zero so the initial behavior is the neutral midpoint.
std::vector<double> mlp_init(const MlpSpec& spec, std::uint64_t seed,
                             double final_layer_scale = 1.0);

// Bias-corrected Adam, minimizing: params -= lr * m_hat / (sqrt(v_hat) + eps).
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-3;

  explicit AdamState(std::size_t n = 0, double learning_rate = 1e-3)
      : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}

  void reset();  // zero moments, zero step counter
};

// Throws std::domain_error on non-finite gradients.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

// Shapes of the two networks exchanged as one unit by the federation layer.
// extra_actor_params covers trailing actor parameters that are not part of
// the MLP itself (the state-independent log-std vector of a Gaussian head).
struct ParamLayout {
  MlpSpec actor;
  MlpSpec critic;
  int extra_actor_params = 0;

  std::size_t actor_count() const { return actor.param_count() + extra_actor_params; }
  std::size_t critic_count() const { return critic.param_count(); }
  std::size_t total_count() const { return actor_count() + critic_count(); }
  std::uint64_t hash() const;  // integrity tag over both topologies
};

// Flat actor+critic parameters plus the integrity tag binding them to a
// ParamLayout; the unit uploaded to and broadcast from the federation server.
struct ParamVector {
  std::vector<double> values;
  std::uint64_t spec_hash = 0;

  double l2_norm() const;
};

ParamVector flatten(const ParamLayout& layout, std::span<const double> actor_params,
                    std::span<const double> critic_params);

// Splits a ParamVector back into actor and critic parameter blocks.
// Throws std::invalid_argument on spec-hash or length mismatch.
void unflatten(const ParamLayout& layout, const ParamVector& pv,
               std::vector<double>& actor_params, std::vector<double>& critic_params);

// Binary checkpoint: little-endian header (layout sizes, spec hash, Adam step
// counter) followed by the raw parameter array. Round trips bit-exactly.
void save_checkpoint(const std::string& path, const ParamLayout& layout, const ParamVector& pv,
                     std::int64_t adam_step);

struct Checkpoint {
  ParamLayout layout;
  ParamVector params;
  std::int64_t adam_step = 0;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace fedgrid
