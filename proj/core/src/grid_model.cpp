#include "fedgrid/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fedgrid {

namespace {

void check_bounds(double p, double lo, double hi, const char* what) {
  if (!(p >= lo && p <= hi)) {
    throw std::domain_error(std::string(what) + " power " + std::to_string(p) +
                            " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

}  // namespace

void CgParams::validate() const {
  if (a < 0.0) throw std::invalid_argument("CgParams: a must be >= 0");
  if (p_min > p_max) throw std::invalid_argument("CgParams: p_min > p_max");
}

void BaParams::validate() const {
  if (!(p_min < 0.0 && 0.0 < p_max)) throw std::invalid_argument("BaParams: need p_min < 0 < p_max");
  if (!(0.0 <= soc_min && soc_min < soc_max && soc_max <= 1.0))
    throw std::invalid_argument("BaParams: need 0 <= soc_min < soc_max <= 1");
  if (!(eta_ch > 0.0 && eta_ch <= 1.0 && eta_dch > 0.0 && eta_dch <= 1.0))
    throw std::invalid_argument("BaParams: efficiencies must lie in (0, 1]");
  if (!(delta >= 0.0 && delta < 1.0)) throw std::invalid_argument("BaParams: delta must lie in [0, 1)");
  if (capacity <= 0.0) throw std::invalid_argument("BaParams: capacity must be positive");
}

void LossCoefficients::validate() const {
  for (double v : {cg, reg, ba}) {
    if (!(v >= 0.0 && v <= 0.1)) throw std::invalid_argument("LossCoefficients: each must lie in [0, 0.1]");
  }
}

double cg_cost(double p, const CgParams& params) {
  check_bounds(p, params.p_min, params.p_max, "CG");
  return params.a * p * p + params.b * p + params.c;
}

double ba_cost(double p, double soc, const BaParams& params) {
  check_bounds(p, params.p_min, params.p_max, "BA");
  if (!(soc >= 0.0 && soc <= 1.0))
    throw std::domain_error("BA soc " + std::to_string(soc) + " outside [0, 1]");
  double x = p + 3.0 * params.p_max * (1.0 - soc);
  return params.a * x * x + params.b * x + params.c;
}

SocTransition soc_step(double soc, double p, double dt_hours, const BaParams& params) {
  double retained = (1.0 - params.delta) * soc;

  // Feasible power window implied by the SOC bounds: discharging drains
  // p*dt/(eta_dch*C) of charge, charging stores eta_ch*|p|*dt/C.
  double max_discharge =
      std::max(0.0, (retained - params.soc_min) * params.eta_dch * params.capacity / dt_hours);
  double max_charge =
      std::min(0.0, (retained - params.soc_max) * params.capacity / (params.eta_ch * dt_hours));
  double applied = std::clamp(p, max_charge, max_discharge);

  double next = applied < 0.0
                    ? retained - params.eta_ch * applied * dt_hours / params.capacity
                    : retained - applied * dt_hours / (params.eta_dch * params.capacity);
  next = std::clamp(next, params.soc_min, params.soc_max);
  return {next, applied};
}

double power_loss(std::span<const double> p_cgs, std::span<const double> p_regs,
                  std::span<const double> p_bas, const LossCoefficients& coeffs) {
  double total = 0.0;
  for (double p : p_cgs) total += coeffs.cg * p;
  for (double p : p_regs) total += coeffs.reg * p;
  for (double p : p_bas) total += coeffs.ba * p;
  return total;
}

std::vector<double> clip_action(std::span<const double> raw,
                                std::span<const std::pair<double, double>> bounds) {
  if (raw.size() != bounds.size()) throw std::invalid_argument("clip_action: size mismatch");
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = std::clamp(raw[i], bounds[i].first, bounds[i].second);
  }
  return out;
}

}  // namespace fedgrid
