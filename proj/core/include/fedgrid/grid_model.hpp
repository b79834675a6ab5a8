#pragma once

#include <span>
#include <utility>
#include <vector>

namespace fedgrid {

// Quadratic fuel-cost curve of a conventional generator plus its power bounds.
struct CgParams {
  double a = 0.0;      // $/kW^2
  double b = 0.0;      // $/kW
  double c = 0.0;      // $ fixed
  double p_min = 0.0;  // kW
  double p_max = 0.0;  // kW

  void validate() const;
};

// Battery cost curve, power bounds and state-of-charge dynamics parameters.
// p_min is the maximum charging power (negative), p_max the maximum
// discharging power (positive).
struct BaParams {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double p_min = -50.0;
  double p_max = 50.0;
  double capacity = 200.0;  // kWh
  double eta_ch = 0.95;
  double eta_dch = 0.95;
  double delta = 0.002;  // self-discharge fraction per step
  double soc_min = 0.1;
  double soc_max = 0.9;

  void validate() const;
};

// Incremental loss coefficients per device class; 0.02 matches the default
// operating assumption for small distribution feeders.
struct LossCoefficients {
  double cg = 0.02;
  double reg = 0.02;
  double ba = 0.02;

  void validate() const;
};

// Generation cost a*p^2 + b*p + c. Throws std::domain_error when p is
// outside [p_min, p_max]; callers are expected to clip first.
double cg_cost(double p, const CgParams& params);

// Battery amortization cost evaluated at the effective power
// x = p + 3*p_max*(1 - soc). Same quadratic shape and bounds rule as cg_cost.
// Note the model as stated can go negative for deep charging at low cost
// coefficients; the value is passed through unclamped.
double ba_cost(double p, double soc, const BaParams& params);

struct SocTransition {
  double soc;            // next state of charge, clamped into [soc_min, soc_max]
  double applied_power;  // kW actually applied once SOC feasibility binds
};

// One step of battery dynamics over dt hours:
//   charging   (p < 0): soc' = (1-delta)*soc - eta_ch*p*dt/capacity
//   discharging(p > 0): soc' = (1-delta)*soc - p*dt/(eta_dch*capacity)
// so a full round trip returns eta_ch*eta_dch of the energy put in. When the
// commanded power would push SOC past its bounds, the applied power is
// reduced to the boundary-feasible value; the returned power is what
// actually flowed and is the number costs and deviations should use.
SocTransition soc_step(double soc, double p, double dt_hours, const BaParams& params);

// P_loss = sum(cg_i * lambda_cg) + sum(reg_j * lambda_reg) + sum(ba_k * lambda_ba)
double power_loss(std::span<const double> p_cgs, std::span<const double> p_regs,
                  std::span<const double> p_bas, const LossCoefficients& coeffs);

// Elementwise clamp of raw device setpoints into [lo, hi] per dimension.
std::vector<double> clip_action(std::span<const double> raw,
                                std::span<const std::pair<double, double>> bounds);

}  // namespace fedgrid
