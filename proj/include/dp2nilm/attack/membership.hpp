#pragma once

// Loss-threshold membership inference: a record is flagged as a training
// member when its loss is strictly below the mean member loss.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <random>
#include <vector>

#include "dp2nilm/core/error.hpp"
#include "dp2nilm/core/rng.hpp"
#include "dp2nilm/nn/network.hpp"

namespace dp2nilm::attack {

struct AttackResult {
  double tpr = 0.0;
  double fpr = 0.0;
  double asr = 0.0;  // tpr - fpr
  std::size_t member_count = 0;
  std::size_t nonmember_count = 0;
  double avg_train_loss = 0.0;
};

struct Records {
  nn::Tensor windows;  // K x window_len
  nn::Tensor states;   // K x I x window_len

  std::size_t size() const { return windows.shape.empty() ? 0 : windows.dim(0); }
};

inline double per_record_loss(const nn::ModelParams& params, const nn::NetworkSpec& spec,
                              const Records& records, std::size_t index) {
  const std::size_t row[] = {index};
  return nn::per_window_loss(params, spec, nn::gather_rows(records.windows, row),
                             nn::gather_rows(records.states, row))
      .front();
}

/// Scores given losses against an explicit threshold: member iff loss < threshold.
inline AttackResult attack_with_threshold(const std::vector<double>& member_losses,
                                          const std::vector<double>& nonmember_losses,
                                          double threshold) {
  if (member_losses.empty() || nonmember_losses.empty()) {
    throw DataError("membership attack needs non-empty member and non-member sets");
  }
  AttackResult r;
  r.member_count = member_losses.size();
  r.nonmember_count = nonmember_losses.size();
  r.avg_train_loss = threshold;
  auto below = [&](const std::vector<double>& v) {
    return static_cast<double>(
        std::count_if(v.begin(), v.end(), [&](double l) { return l < threshold; }));
  };
  r.tpr = below(member_losses) / static_cast<double>(member_losses.size());
  r.fpr = below(nonmember_losses) / static_cast<double>(nonmember_losses.size());
  r.asr = r.tpr - r.fpr;
  return r;
}

/// Scores given losses; the threshold is the mean member loss.
inline AttackResult attack_from_losses(const std::vector<double>& member_losses,
                                       const std::vector<double>& nonmember_losses) {
  if (member_losses.empty() || nonmember_losses.empty()) {
    throw DataError("membership attack needs non-empty member and non-member sets");
  }
  const double mean = std::accumulate(member_losses.begin(), member_losses.end(), 0.0) /
                      static_cast<double>(member_losses.size());
  return attack_with_threshold(member_losses, nonmember_losses, mean);
}

/// Seeded subsample of `from` down to `keep` indices, returned in ascending order.
inline std::vector<std::size_t> subsample(std::size_t from, std::size_t keep, Seed seed) {
  std::vector<std::size_t> idx(from);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (keep >= from) return idx;
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Balances the two pools by subsampling the larger, then attacks.
inline AttackResult membership_attack(const nn::ModelParams& params, const nn::NetworkSpec& spec,
                                      const Records& members, const Records& nonmembers,
                                      Seed seed) {
  if (members.size() == 0 || nonmembers.size() == 0) {
    throw DataError("membership attack needs non-empty member and non-member sets");
  }
  const std::size_t n = std::min(members.size(), nonmembers.size());
  auto losses = [&](const Records& r, Seed s) {
    const auto rows = subsample(r.size(), n, s);
    return nn::per_window_loss(params, spec, nn::gather_rows(r.windows, rows),
                               nn::gather_rows(r.states, rows));
  };
  return attack_from_losses(losses(members, derive_seed(seed, "members")),
                            losses(nonmembers, derive_seed(seed, "nonmembers")));
}

}  // namespace dp2nilm::attack
