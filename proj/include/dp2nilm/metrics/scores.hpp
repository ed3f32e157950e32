#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dp2nilm/core/error.hpp"
#include "dp2nilm/data/timeseries.hpp"
#include "dp2nilm/nn/network.hpp"

namespace dp2nilm::metrics {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct Scores {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  friend bool operator==(const Scores&, const Scores&) = default;
};

inline void add_point(ConfusionCounts& c, bool pred, bool truth) {
  if (pred && truth) ++c.tp;
  else if (pred) ++c.fp;
  else if (truth) ++c.fn;
  else ++c.tn;
}

/// Pointwise counts with ON as the positive class.
inline ConfusionCounts confusion(const data::StateSeries& pred, const data::StateSeries& truth) {
  if (pred.size() != truth.size()) throw ShapeError("prediction and truth lengths differ");
  ConfusionCounts c;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (pred.values[t] > 1 || truth.values[t] > 1) throw DataError("states must be binary");
    add_point(c, pred.values[t] == 1, truth.values[t] == 1);
  }
  return c;
}

// Precision, recall and F1 are 0 when their denominator is 0.
inline Scores scores(const ConfusionCounts& c) {
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  Scores s;
  const double tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
  const double fn = static_cast<double>(c.fn), tn = static_cast<double>(c.tn);
  s.accuracy = ratio(tp + tn, tp + tn + fp + fn);
  s.precision = ratio(tp, tp + fp);
  s.recall = ratio(tp, tp + fn);
  s.f1 = ratio(2.0 * s.precision * s.recall, s.precision + s.recall);
  return s;
}

/// Unweighted mean across clients; input is [client][appliance].
inline std::vector<Scores> average_scores(const std::vector<std::vector<Scores>>& per_client) {
  if (per_client.empty()) throw ConfigError("need at least one client to average");
  const std::size_t apps = per_client.front().size();
  std::vector<Scores> out(apps);
  for (const auto& client : per_client) {
    if (client.size() != apps) throw ShapeError("clients report different appliance counts");
    for (std::size_t a = 0; a < apps; ++a) {
      out[a].accuracy += client[a].accuracy;
      out[a].precision += client[a].precision;
      out[a].recall += client[a].recall;
      out[a].f1 += client[a].f1;
    }
  }
  const double n = static_cast<double>(per_client.size());
  for (auto& s : out) {
    s.accuracy /= n;
    s.precision /= n;
    s.recall /= n;
    s.f1 /= n;
  }
  return out;
}

/// Per-appliance counts of a model over (windows, states); ON iff p >= 0.5.
inline std::vector<ConfusionCounts> evaluate_counts(const nn::ModelParams& params,
                                                    const nn::NetworkSpec& spec,
                                                    const nn::Tensor& windows,
                                                    const nn::Tensor& states,
                                                    std::size_t batch_size = 64) {
  std::vector<ConfusionCounts> counts(spec.appliance_count);
  const std::size_t k = windows.dim(0);
  for (std::size_t start = 0; start < k; start += batch_size) {
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < std::min(k, start + batch_size); ++i) rows.push_back(i);
    const nn::Tensor probs = nn::forward(params, spec, nn::gather_rows(windows, rows));
    for (std::size_t b = 0; b < rows.size(); ++b) {
      for (std::size_t a = 0; a < spec.appliance_count; ++a) {
        for (std::size_t t = 0; t < spec.window_len; ++t) {
          add_point(counts[a], probs(b, a, t) >= 0.5, states(rows[b], a, t) == 1.0);
        }
      }
    }
  }
  return counts;
}

}  // namespace dp2nilm::metrics
