#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dp2nilm/core/error.hpp"

namespace dp2nilm::data {

/// Load normalization divisor in watts.
inline constexpr double kNormScaleW = 2000.0;

struct ApplianceSpec {
  std::string name;
  double max_power_w = 0.0;
  double power_threshold_w = 0.0;  // ON iff reading >= threshold
  double min_on_s = 0.0;
  double min_off_s = 0.0;

  friend bool operator==(const ApplianceSpec&, const ApplianceSpec&) = default;
};

inline void validate(const ApplianceSpec& a) {
  if (!(a.power_threshold_w < a.max_power_w)) {
    throw ConfigError("appliance '" + a.name + "': power threshold must be below max power");
  }
  if (a.min_on_s < 0.0 || a.min_off_s < 0.0) {
    throw ConfigError("appliance '" + a.name + "': durations must be non-negative");
  }
}

inline ApplianceSpec fridge_spec() { return {"fridge", 300.0, 50.0, 1.0, 0.0}; }
inline ApplianceSpec dishwasher_spec() { return {"dishwasher", 2500.0, 20.0, 60.0, 60.0}; }
inline ApplianceSpec washing_machine_spec() { return {"washing_machine", 2500.0, 20.0, 60.0, 5.0}; }

inline std::vector<ApplianceSpec> default_appliances() {
  return {fridge_spec(), dishwasher_spec(), washing_machine_spec()};
}

inline ApplianceSpec default_appliance(const std::string& name) {
  for (const auto& a : default_appliances()) {
    if (a.name == name) return a;
  }
  throw ConfigError("no default thresholds for appliance '" + name + "'");
}

struct TimeSeries {
  double sample_period_s = 6.0;
  std::vector<double> values;
  std::int64_t start_epoch_s = 0;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const TimeSeries&, const TimeSeries&) = default;
};

struct StateSeries {
  std::vector<std::uint8_t> values;
  double sample_period_s = 6.0;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const StateSeries&, const StateSeries&) = default;
};

/// Clamps readings into [0, max_power_w].
inline TimeSeries clamp_max_power(TimeSeries ts, double max_power_w) {
  for (double& v : ts.values) v = std::clamp(v, 0.0, max_power_w);
  return ts;
}

/// Block means over target_period / source_period samples; a trailing partial
/// block is dropped.
inline TimeSeries resample_mean(const TimeSeries& ts, double target_period_s) {
  if (!(ts.sample_period_s > 0.0) || !(target_period_s > 0.0)) {
    throw DataError("sample periods must be positive");
  }
  const double ratio = target_period_s / ts.sample_period_s;
  const double factor_d = std::round(ratio);
  if (factor_d < 1.0 || std::abs(ratio - factor_d) > 1e-9 * ratio) {
    throw DataError("target period " + std::to_string(target_period_s) +
                    " s is not an integer multiple of " + std::to_string(ts.sample_period_s) + " s");
  }
  const auto factor = static_cast<std::size_t>(factor_d);
  TimeSeries out{target_period_s, {}, ts.start_epoch_s};
  if (factor == 1) {
    out.values = ts.values;
    return out;
  }
  const std::size_t n = ts.values.size() / factor;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < factor; ++j) s += ts.values[i * factor + j];
    out.values[i] = s / static_cast<double>(factor);
  }
  return out;
}

inline TimeSeries normalize(TimeSeries ts, double mean_w) {
  for (double& v : ts.values) v = (v - mean_w) / kNormScaleW;
  return ts;
}

inline TimeSeries denormalize(TimeSeries ts, double mean_w) {
  for (double& v : ts.values) v = v * kNormScaleW + mean_w;
  return ts;
}

inline StateSeries threshold_states(const TimeSeries& trace, const ApplianceSpec& spec) {
  StateSeries s{std::vector<std::uint8_t>(trace.size()), trace.sample_period_s};
  for (std::size_t t = 0; t < trace.size(); ++t) {
    s.values[t] = trace.values[t] >= spec.power_threshold_w ? 1 : 0;
  }
  return s;
}

inline std::size_t duration_to_samples(double seconds, double period_s) {
  return static_cast<std::size_t>(std::ceil(seconds / period_s - 1e-12));
}

/// Minimum-duration cleanup of ON/OFF states. First, OFF gaps shorter than the
/// minimum OFF duration that sit between two ON runs are switched ON. Then ON
/// runs shorter than the minimum ON duration are switched OFF.
inline StateSeries activation_time_threshold(StateSeries states, const ApplianceSpec& spec) {
  const std::size_t on_min = duration_to_samples(spec.min_on_s, states.sample_period_s);
  const std::size_t off_min = duration_to_samples(spec.min_off_s, states.sample_period_s);
  auto& v = states.values;
  const std::size_t n = v.size();
  for (auto x : v) {
    if (x > 1) throw DataError("state series must be binary");
  }

  std::size_t t = 0;
  while (t < n && v[t] == 0) ++t;  // leading OFF run is never a gap
  while (t < n) {
    while (t < n && v[t] == 1) ++t;
    const std::size_t gap_start = t;
    while (t < n && v[t] == 0) ++t;
    if (t < n && t - gap_start < off_min) {
      std::fill(v.begin() + gap_start, v.begin() + t, 1);
    }
  }

  t = 0;
  while (t < n) {
    if (v[t] == 0) {
      ++t;
      continue;
    }
    const std::size_t run_start = t;
    while (t < n && v[t] == 1) ++t;
    if (t - run_start < on_min) std::fill(v.begin() + run_start, v.begin() + t, 0);
  }
  return states;
}

}  // namespace dp2nilm::data
