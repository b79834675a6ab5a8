#include "fedgrid/approximator.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace fedgrid {

std::size_t MlpSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
    n += static_cast<std::size_t>(layer_sizes[k + 1]) * layer_sizes[k] + layer_sizes[k + 1];
  }
  return n;
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2) throw std::invalid_argument("MlpSpec: need at least two layers");
  for (int s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("MlpSpec: all layer sizes must be >= 1");
  }
}

void mlp_forward(const MlpSpec& spec, std::span<const double> params,
                 std::span<const double> input, std::vector<double>& output,
                 MlpWorkspace* workspace) {
  if (params.size() != spec.param_count()) throw std::invalid_argument("mlp_forward: bad param count");
  if (input.size() != static_cast<std::size_t>(spec.input_size()))
    throw std::invalid_argument("mlp_forward: bad input size");

  if (workspace) {
    workspace->activations.assign(1, std::vector<double>(input.begin(), input.end()));
    workspace->pre_tanh.clear();
  }

  std::vector<double> current(input.begin(), input.end());
  std::size_t offset = 0;
  int layers = spec.layer_count();
  for (int k = 0; k < layers; ++k) {
    int in = spec.layer_sizes[k];
    int out = spec.layer_sizes[k + 1];
    const double* w = params.data() + offset;
    const double* b = w + static_cast<std::size_t>(out) * in;
    std::vector<double> next(out);
    for (int i = 0; i < out; ++i) {
      double acc = b[i];
      const double* wi = w + static_cast<std::size_t>(i) * in;
      for (int j = 0; j < in; ++j) acc += wi[j] * current[j];
      next[i] = acc;
    }
    bool hidden = k + 1 < layers;
    if (hidden) {
      if (workspace) workspace->pre_tanh.push_back(next);
      for (double& v : next) v = std::tanh(v);
    }
    if (workspace) workspace->activations.push_back(next);
    current = std::move(next);
    offset += static_cast<std::size_t>(out) * in + out;
  }
  output = std::move(current);
}

void mlp_backward(const MlpSpec& spec, std::span<const double> params,
                  const MlpWorkspace& workspace, std::span<const double> output_grad,
                  std::span<double> param_grad, std::span<double> input_grad) {
  int layers = spec.layer_count();
  if (workspace.activations.size() != static_cast<std::size_t>(layers) + 1)
    throw std::invalid_argument("mlp_backward: workspace does not match spec");
  if (output_grad.size() != static_cast<std::size_t>(spec.output_size()))
    throw std::invalid_argument("mlp_backward: bad output_grad size");
  if (param_grad.size() != spec.param_count())
    throw std::invalid_argument("mlp_backward: bad param_grad size");

  // Offsets of each layer's parameter block.
  std::vector<std::size_t> offsets(layers);
  std::size_t off = 0;
  for (int k = 0; k < layers; ++k) {
    offsets[k] = off;
    off += static_cast<std::size_t>(spec.layer_sizes[k + 1]) * spec.layer_sizes[k] +
           spec.layer_sizes[k + 1];
  }

  std::vector<double> delta(output_grad.begin(), output_grad.end());
  for (int k = layers - 1; k >= 0; --k) {
    int in = spec.layer_sizes[k];
    int out = spec.layer_sizes[k + 1];
    const std::vector<double>& below = workspace.activations[k];
    const double* w = params.data() + offsets[k];
    double* gw = param_grad.data() + offsets[k];
    double* gb = gw + static_cast<std::size_t>(out) * in;

    for (int i = 0; i < out; ++i) {
      double d = delta[i];
      gb[i] += d;
      double* gwi = gw + static_cast<std::size_t>(i) * in;
      for (int j = 0; j < in; ++j) gwi[j] += d * below[j];
    }

    bool need_below = k > 0 || !input_grad.empty();
    if (!need_below) break;
    std::vector<double> prev(in, 0.0);
    for (int j = 0; j < in; ++j) {
      double acc = 0.0;
      for (int i = 0; i < out; ++i) acc += w[static_cast<std::size_t>(i) * in + j] * delta[i];
      prev[j] = acc;
    }
    if (k > 0) {
      // below is the tanh output of hidden layer k-1; 1 - y^2 is its slope
      for (int j = 0; j < in; ++j) prev[j] *= 1.0 - below[j] * below[j];
    } else if (!input_grad.empty()) {
      if (input_grad.size() != static_cast<std::size_t>(in))
        throw std::invalid_argument("mlp_backward: bad input_grad size");
      for (int j = 0; j < in; ++j) input_grad[j] += prev[j];
      break;
    }
    delta = std::move(prev);
  }
}

std::vector<double> mlp_init(const MlpSpec& spec, std::uint64_t seed,
                             double final_layer_scale) {
  spec.validate();
  Rng rng(seed);
  std::vector<double> params(spec.param_count(), 0.0);
  std::size_t offset = 0;
  for (int k = 0; k < spec.layer_count(); ++k) {
    int in = spec.layer_sizes[k];
    int out = spec.layer_sizes[k + 1];
    double bound = std::sqrt(6.0 / (in + out));
    if (k + 1 == spec.layer_count()) bound *= final_layer_scale;
    for (std::size_t i = 0; i < static_cast<std::size_t>(out) * in; ++i) {
      params[offset + i] = rng.uniform(-bound, bound);
    }
    offset += static_cast<std::size_t>(out) * in + out;  // biases stay zero
  }
  return params;
}

void AdamState::reset() {
  std::fill(m.begin(), m.end(), 0.0);
  std::fill(v.begin(), v.end(), 0.0);
  step = 0;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: size mismatch");
  for (double g : grads) {
    if (!std::isfinite(g)) throw std::domain_error("adam_step: non-finite gradient");
  }
  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    double m_hat = state.m[i] / bc1;
    double v_hat = state.v[i] / bc2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_mix(std::uint64_t& h, std::uint64_t word) {
  for (int i = 0; i < 8; ++i) {
    h ^= (word >> (8 * i)) & 0xffULL;
    h *= kFnvPrime;
  }
}

}  // namespace

std::uint64_t ParamLayout::hash() const {
  std::uint64_t h = kFnvOffset;
  fnv_mix(h, actor.layer_sizes.size());
  for (int s : actor.layer_sizes) fnv_mix(h, static_cast<std::uint64_t>(s));
  fnv_mix(h, static_cast<std::uint64_t>(extra_actor_params));
  fnv_mix(h, critic.layer_sizes.size());
  for (int s : critic.layer_sizes) fnv_mix(h, static_cast<std::uint64_t>(s));
  return h;
}

double ParamVector::l2_norm() const {
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc);
}

ParamVector flatten(const ParamLayout& layout, std::span<const double> actor_params,
                    std::span<const double> critic_params) {
  if (actor_params.size() != layout.actor_count())
    throw std::invalid_argument("flatten: actor param count mismatch");
  if (critic_params.size() != layout.critic_count())
    throw std::invalid_argument("flatten: critic param count mismatch");
  ParamVector pv;
  pv.spec_hash = layout.hash();
  pv.values.reserve(layout.total_count());
  pv.values.insert(pv.values.end(), actor_params.begin(), actor_params.end());
  pv.values.insert(pv.values.end(), critic_params.begin(), critic_params.end());
  for (double v : pv.values) {
    if (!std::isfinite(v)) throw std::invalid_argument("flatten: non-finite parameter");
  }
  return pv;
}

void unflatten(const ParamLayout& layout, const ParamVector& pv,
               std::vector<double>& actor_params, std::vector<double>& critic_params) {
  if (pv.spec_hash != layout.hash())
    throw std::invalid_argument("unflatten: spec hash mismatch (wrong topology)");
  if (pv.values.size() != layout.total_count())
    throw std::invalid_argument("unflatten: parameter vector length mismatch");
  std::size_t na = layout.actor_count();
  actor_params.assign(pv.values.begin(), pv.values.begin() + na);
  critic_params.assign(pv.values.begin() + na, pv.values.end());
}

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x31434746;  // "FGC1" little-endian

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ofstream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(out, bits);
}

std::uint32_t read_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::ifstream& in) {
  std::uint64_t bits = read_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamLayout& layout, const ParamVector& pv,
                     std::int64_t adam_step) {
  if (pv.spec_hash != layout.hash() || pv.values.size() != layout.total_count())
    throw std::invalid_argument("save_checkpoint: params do not match layout");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_u32(out, kCheckpointMagic);
  write_u32(out, static_cast<std::uint32_t>(layout.actor.layer_sizes.size()));
  for (int s : layout.actor.layer_sizes) write_u32(out, static_cast<std::uint32_t>(s));
  write_u32(out, static_cast<std::uint32_t>(layout.extra_actor_params));
  write_u32(out, static_cast<std::uint32_t>(layout.critic.layer_sizes.size()));
  for (int s : layout.critic.layer_sizes) write_u32(out, static_cast<std::uint32_t>(s));
  write_u64(out, static_cast<std::uint64_t>(adam_step));
  write_u64(out, pv.spec_hash);
  write_u64(out, pv.values.size());
  for (double v : pv.values) write_f64(out, v);
  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  if (read_u32(in) != kCheckpointMagic) throw std::runtime_error("checkpoint: bad magic");

  Checkpoint ck;
  std::uint32_t na = read_u32(in);
  ck.layout.actor.layer_sizes.resize(na);
  for (auto& s : ck.layout.actor.layer_sizes) s = static_cast<int>(read_u32(in));
  ck.layout.extra_actor_params = static_cast<int>(read_u32(in));
  std::uint32_t nc = read_u32(in);
  ck.layout.critic.layer_sizes.resize(nc);
  for (auto& s : ck.layout.critic.layer_sizes) s = static_cast<int>(read_u32(in));
  ck.adam_step = static_cast<std::int64_t>(read_u64(in));
  ck.params.spec_hash = read_u64(in);
  std::uint64_t count = read_u64(in);
  if (ck.params.spec_hash != ck.layout.hash())
    throw std::runtime_error("checkpoint: spec hash does not match stored topology");
  if (count != ck.layout.total_count())
    throw std::runtime_error("checkpoint: parameter count does not match topology");
  ck.params.values.resize(count);
  for (auto& v : ck.params.values) v = read_f64(in);
  return ck;
}

}  // namespace fedgrid
