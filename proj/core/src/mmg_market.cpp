#include "fedgrid/mmg_market.hpp"

#include <stdexcept>

namespace fedgrid {

SettlementResult settle(std::span<const double> net_surplus, std::span<const double> price_mg,
                        double price_dpn) {
  if (net_surplus.size() != price_mg.size()) {
    throw std::invalid_argument("settle: one price per MG required");
  }
  std::size_t n = net_surplus.size();
  for (double p : price_mg) {
    if (!(p > 0.0)) throw std::invalid_argument("settle: prices must be positive");
  }
  if (!(price_dpn > 0.0)) throw std::invalid_argument("settle: price_dpn must be positive");

  std::vector<double> surplus(n, 0.0), deficit(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (net_surplus[i] > 0.0) surplus[i] = net_surplus[i];
    if (net_surplus[i] < 0.0) deficit[i] = -net_surplus[i];
  }

  SettlementResult result;
  result.residual_from_grid.assign(n, 0.0);
  result.exported_to_grid.assign(n, 0.0);

  for (std::size_t buyer = 0; buyer < n; ++buyer) {
    double need = deficit[buyer];
    while (need > 0.0) {
      // Cheapest MG that still has surplus; exhausted sellers drop out.
      int best = -1;
      for (std::size_t s = 0; s < n; ++s) {
        if (s == buyer || surplus[s] <= 0.0) continue;
        if (best < 0 || price_mg[s] < price_mg[best]) best = static_cast<int>(s);
      }
      if (best < 0) break;
      double qty = std::min(need, surplus[best]);
      result.trades.push_back({static_cast<int>(buyer), best, qty, price_mg[best],
                               qty * price_mg[best]});
      surplus[best] -= qty;
      need -= qty;
    }
    if (need > 0.0) {
      result.trades.push_back({static_cast<int>(buyer), kGridParticipant, need, price_dpn,
                               need * price_dpn});
      result.residual_from_grid[buyer] = need;
    }
  }

  // Whatever no MG bought goes out to the distribution network at the
  // seller's own inter-MG price (reported, not part of the training reward).
  for (std::size_t s = 0; s < n; ++s) {
    if (surplus[s] > 0.0) {
      result.trades.push_back({kGridParticipant, static_cast<int>(s), surplus[s], price_mg[s],
                               surplus[s] * price_mg[s]});
      result.exported_to_grid[s] = surplus[s];
    }
  }
  return result;
}

double system_reward(std::span<const double> per_mg_rewards) {
  double total = 0.0;
  for (double r : per_mg_rewards) total += r;
  return total;
}

}  // namespace fedgrid
