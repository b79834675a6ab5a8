#pragma once

#include <span>
#include <vector>

namespace fedgrid {

inline constexpr int kGridParticipant = -1;

struct Trade {
  int buyer;      // MG index, or kGridParticipant when surplus is exported
  int seller;     // MG index, or kGridParticipant for distribution-network power
  double kw;
  double price;   // $/kW
  double cost;    // kw * price
};

struct SettlementResult {
  std::vector<Trade> trades;
  std::vector<double> residual_from_grid;  // kW bought from the grid, per MG
  std::vector<double> exported_to_grid;    // unsold surplus, per MG
  double system_reward = 0.0;  // filled by the caller from per-MG rewards
};

// Matches each deficit MG against the cheapest MG that still has surplus
// (ties broken by lowest index); leftover deficit is covered by the
// distribution network at price_dpn, leftover surplus is exported at the
// seller's inter-MG price. `net_surplus` is generation minus load per MG:
// positive entries sell, negative entries buy. Buyers are served in index
// order. Pure function; throws std::invalid_argument on length mismatch.
SettlementResult settle(std::span<const double> net_surplus, std::span<const double> price_mg,
                        double price_dpn);

// r_sys = sum of the per-MG physics-informed rewards.
double system_reward(std::span<const double> per_mg_rewards);

}  // namespace fedgrid
