#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dp2nilm/core/error.hpp"
#include "dp2nilm/data/timeseries.hpp"
#include "dp2nilm/nn/tensor.hpp"

namespace dp2nilm::data {

using nn::Tensor;

struct Windows {
  Tensor aggregate;  // K x window_len
  Tensor states;     // K x I x window_len
};

/// Cuts aligned windows: window k, sample j is global index k*stride + j.
inline Windows make_windows(const TimeSeries& aggregate, const std::vector<StateSeries>& states,
                            std::size_t window_len, std::size_t stride) {
  if (window_len == 0 || stride == 0) throw ConfigError("window and stride must be positive");
  const std::size_t len = aggregate.size();
  for (const auto& s : states) {
    if (s.size() != len) throw DataError("state series length differs from aggregate");
    if (s.sample_period_s != aggregate.sample_period_s) {
      throw DataError("state series period differs from aggregate");
    }
  }
  if (len < window_len) {
    throw DataError("series of " + std::to_string(len) + " samples is shorter than window " +
                    std::to_string(window_len));
  }
  const std::size_t k = (len - window_len) / stride + 1;
  const std::size_t apps = states.size();
  Windows w{Tensor({k, window_len}), Tensor({k, apps, window_len})};
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t base = i * stride;
    for (std::size_t j = 0; j < window_len; ++j) {
      w.aggregate(i, j) = aggregate.values[base + j];
      for (std::size_t a = 0; a < apps; ++a) {
        w.states(i, a, j) = static_cast<double>(states[a].values[base + j]);
      }
    }
  }
  return w;
}

struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Chronological split: earliest windows train. Validation and test sizes are
/// floor(ratio * K); the remainder goes to training.
inline Split split_dataset(std::size_t k, double train_ratio = 0.8, double val_ratio = 0.1,
                           double test_ratio = 0.1) {
  if (k < 10) throw DataError("need at least 10 windows to split, got " + std::to_string(k));
  if (train_ratio <= 0.0 || val_ratio < 0.0 || test_ratio < 0.0 ||
      std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  // Small epsilon so that e.g. 0.1 * 10 is not floored to 0.
  const auto n_val = static_cast<std::size_t>(val_ratio * static_cast<double>(k) + 1e-9);
  const auto n_test = static_cast<std::size_t>(test_ratio * static_cast<double>(k) + 1e-9);
  const std::size_t n_train = k - n_val - n_test;
  Split s;
  for (std::size_t i = 0; i < k; ++i) {
    if (i < n_train) s.train.push_back(i);
    else if (i < n_train + n_val) s.val.push_back(i);
    else s.test.push_back(i);
  }
  return s;
}

struct ClientDataset {
  std::size_t client_id = 0;
  Tensor aggregate;  // normalized, K x window_len
  Tensor states;     // K x I x window_len
  Split split;
  double norm_mean_w = 0.0;
  double norm_scale_w = kNormScaleW;

  std::size_t window_count() const { return aggregate.shape.empty() ? 0 : aggregate.dim(0); }
};

struct PreprocessOptions {
  double target_period_s = 30.0;
  std::size_t window_len = 120;
  std::size_t stride = 120;

  friend bool operator==(const PreprocessOptions&, const PreprocessOptions&) = default;
};

/// Raw readings to a training-ready client: clamp appliance traces to their max
/// power, resample by averaging, derive cleaned ON/OFF states, window, split
/// chronologically and normalize with the training-window mean.
inline ClientDataset prepare_client(std::size_t client_id, const TimeSeries& aggregate,
                                    const std::vector<TimeSeries>& traces,
                                    const std::vector<ApplianceSpec>& appliances,
                                    const PreprocessOptions& opt) {
  if (traces.size() != appliances.size()) {
    throw DataError("client " + std::to_string(client_id) + ": " +
                    std::to_string(traces.size()) + " traces for " +
                    std::to_string(appliances.size()) + " appliances");
  }
  TimeSeries agg = resample_mean(clamp_max_power(aggregate, std::numeric_limits<double>::max()),
                                 opt.target_period_s);
  std::vector<StateSeries> states;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    validate(appliances[i]);
    TimeSeries tr = resample_mean(clamp_max_power(traces[i], appliances[i].max_power_w),
                                  opt.target_period_s);
    StateSeries s = activation_time_threshold(threshold_states(tr, appliances[i]), appliances[i]);
    states.push_back(std::move(s));
  }
  std::size_t len = agg.size();
  for (const auto& s : states) len = std::min(len, s.size());
  agg.values.resize(len);
  for (auto& s : states) s.values.resize(len);

  Windows w = make_windows(agg, states, opt.window_len, opt.stride);
  ClientDataset ds;
  ds.client_id = client_id;
  ds.split = split_dataset(w.aggregate.dim(0));
  double sum = 0.0;
  for (std::size_t k : ds.split.train) {
    for (double v : w.aggregate.row(k)) sum += v;
  }
  ds.norm_mean_w = sum / static_cast<double>(ds.split.train.size() * opt.window_len);
  for (double& v : w.aggregate.data) v = (v - ds.norm_mean_w) / kNormScaleW;
  ds.aggregate = std::move(w.aggregate);
  ds.states = std::move(w.states);
  return ds;
}

/// Rows of one split as (windows, states) tensors.
inline std::pair<Tensor, Tensor> split_tensors(const ClientDataset& ds,
                                               const std::vector<std::size_t>& rows) {
  return {nn::gather_rows(ds.aggregate, rows), nn::gather_rows(ds.states, rows)};
}

}  // namespace dp2nilm::data
