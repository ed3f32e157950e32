#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dp2nilm/core/error.hpp"

namespace dp2nilm::dp {

struct LedgerEntry {
  std::size_t round = 0;
  double delta_eps = 0.0;
  double cumulative_eps = 0.0;
  bool exhausted = false;
  double noise_std = 0.0;  // per-coordinate std of the injected noise
};

/// Per-round privacy spend under basic composition.
struct PrivacyLedger {
  double epsilon_budget = 0.0;
  std::size_t max_rounds = 0;
  bool heuristic = false;  // set for client-side noise, where the figure is not a guarantee
  std::vector<LedgerEntry> entries;

  double cumulative() const { return entries.empty() ? 0.0 : entries.back().cumulative_eps; }
  bool exhausted() const { return !entries.empty() && entries.back().exhausted; }
};

/// Spend of one Gaussian-mechanism round with delta split evenly over
/// max_rounds: sqrt(2 ln(1.25 / (delta / max_rounds))) / sigma.
inline double round_epsilon(double delta, double sigma, std::size_t max_rounds) {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (!(sigma > 0.0)) throw ConfigError("accounting needs a positive sigma");
  if (max_rounds == 0) throw ConfigError("max_rounds must be positive");
  const double delta_round = delta / static_cast<double>(max_rounds);
  return std::sqrt(2.0 * std::log(1.25 / delta_round)) / sigma;
}

/// Records round `round` (1-based, consecutive) and returns the cumulative
/// spend round * delta_eps.
inline double privacy_account(PrivacyLedger& ledger, double delta, double sigma,
                              std::size_t round) {
  if (round != ledger.entries.size() + 1) {
    throw ConfigError("privacy ledger rounds must be recorded in order");
  }
  const double step = round_epsilon(delta, sigma, ledger.max_rounds);
  LedgerEntry e;
  e.round = round;
  e.delta_eps = step;
  e.cumulative_eps = static_cast<double>(round) * step;
  e.exhausted = e.cumulative_eps > ledger.epsilon_budget;
  ledger.entries.push_back(e);
  return e.cumulative_eps;
}

/// First round whose cumulative spend exceeds the budget: ceil(budget / step),
/// bumped by one when the ratio is an exact integer.
inline std::size_t halting_round(double epsilon_budget, double delta_eps) {
  auto r = static_cast<std::size_t>(std::ceil(epsilon_budget / delta_eps));
  if (r == 0 || static_cast<double>(r) * delta_eps <= epsilon_budget) ++r;
  return r;
}

}  // namespace dp2nilm::dp
