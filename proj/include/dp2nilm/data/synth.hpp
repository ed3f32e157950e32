#pragma once

// Synthetic smart-meter households. Each appliance follows either a cyclic
// model (compressor-style square wave) or an activation model (sparse
// multi-phase programs); the aggregate is the sum of appliance traces plus a
// residual of base load, Gaussian noise, and short unmonitored spikes.
// Readings are quantized to 1/8 W so sums and differences are exact.

#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "dp2nilm/core/error.hpp"
#include "dp2nilm/core/rng.hpp"
#include "dp2nilm/data/timeseries.hpp"

namespace dp2nilm::data {

struct CyclicModel {
  double period_s = 2400.0;
  double duty = 0.4;
  double on_power_w = 120.0;
  double jitter = 0.1;  // relative spread of period, duty and power per cycle

  friend bool operator==(const CyclicModel&, const CyclicModel&) = default;
};

struct ActivationModel {
  double rate_per_day = 0.5;
  std::vector<double> phase_powers_w;
  std::vector<double> phase_durations_s;
  double first_hour = 7.0;  // activations start within [first_hour, last_hour)
  double last_hour = 22.0;

  friend bool operator==(const ActivationModel&, const ActivationModel&) = default;
};

using ApplianceModel = std::variant<CyclicModel, ActivationModel>;

struct SpikeModel {
  double rate_per_day = 0.0;
  double power_w = 2000.0;
  double duration_s = 180.0;

  friend bool operator==(const SpikeModel&, const SpikeModel&) = default;
};

struct SynthProfile {
  std::map<std::string, ApplianceModel> models;  // keyed by appliance name
  double base_load_w = 0.0;
  double residual_noise_w = 0.0;
  SpikeModel spikes;

  friend bool operator==(const SynthProfile&, const SynthProfile&) = default;
};

struct SynthClient {
  std::vector<TimeSeries> appliances;  // aligned with the ApplianceSpec list
  TimeSeries aggregate;
  TimeSeries residual;
};

inline double quantize_w(double w) { return std::round(w * 8.0) / 8.0; }

inline void validate_model(const ApplianceModel& model, const ApplianceSpec& spec) {
  if (const auto* c = std::get_if<CyclicModel>(&model)) {
    if (!(c->duty > 0.0 && c->duty < 1.0)) {
      throw ConfigError(spec.name + ": cyclic duty must lie in (0, 1)");
    }
    if (!(c->period_s > 0.0)) throw ConfigError(spec.name + ": cyclic period must be positive");
    if (c->on_power_w * (1.0 + c->jitter) > spec.max_power_w) {
      throw ConfigError(spec.name + ": cyclic power exceeds max power");
    }
  } else {
    const auto& a = std::get<ActivationModel>(model);
    if (a.phase_powers_w.size() != a.phase_durations_s.size() || a.phase_powers_w.empty()) {
      throw ConfigError(spec.name + ": activation phases need matching powers and durations");
    }
    for (double p : a.phase_powers_w) {
      if (p < 0.0 || p > spec.max_power_w) {
        throw ConfigError(spec.name + ": phase power outside [0, max power]");
      }
    }
    if (a.rate_per_day < 0.0) throw ConfigError(spec.name + ": negative activation rate");
  }
}

namespace detail {

inline void fill_cyclic(std::vector<double>& out, const CyclicModel& m, double period_s, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double horizon = static_cast<double>(out.size()) * period_s;
  double t = -std::uniform_real_distribution<double>(0.0, m.period_s)(rng);
  while (t < horizon) {
    const double cycle = m.period_s * (1.0 + m.jitter * u(rng));
    const double duty = std::clamp(m.duty * (1.0 + m.jitter * u(rng)), 0.01, 0.99);
    const double power = quantize_w(m.on_power_w * (1.0 + m.jitter * u(rng)));
    const double on_end = t + duty * cycle;
    const auto i0 = static_cast<std::ptrdiff_t>(std::ceil(t / period_s));
    const auto i1 = static_cast<std::ptrdiff_t>(std::ceil(on_end / period_s));
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(i0, 0);
         i < std::min<std::ptrdiff_t>(i1, static_cast<std::ptrdiff_t>(out.size())); ++i) {
      out[static_cast<std::size_t>(i)] = power;
    }
    t += cycle;
  }
}

inline void place_program(std::vector<double>& out, double start_s, double period_s,
                          const std::vector<double>& powers, const std::vector<double>& durations) {
  double t = start_s;
  for (std::size_t ph = 0; ph < powers.size(); ++ph) {
    const auto i0 = static_cast<std::size_t>(std::ceil(t / period_s));
    const double end = t + durations[ph];
    const auto i1 = static_cast<std::size_t>(std::ceil(end / period_s));
    for (std::size_t i = i0; i < std::min(i1, out.size()); ++i) {
      out[i] = std::max(out[i], quantize_w(powers[ph]));
    }
    t = end;
  }
}

inline void fill_activations(std::vector<double>& out, const ActivationModel& m, double period_s,
                             std::size_t days, Rng& rng) {
  std::poisson_distribution<int> count(m.rate_per_day);
  std::uniform_real_distribution<double> hour(m.first_hour, m.last_hour);
  for (std::size_t d = 0; d < days; ++d) {
    const int n = m.rate_per_day > 0.0 ? count(rng) : 0;
    for (int k = 0; k < n; ++k) {
      const double start = (static_cast<double>(d) * 24.0 + hour(rng)) * 3600.0;
      place_program(out, start, period_s, m.phase_powers_w, m.phase_durations_s);
    }
  }
}

}  // namespace detail

/// Generates one household. aggregate[t] == sum_i appliance_i[t] + residual[t]
/// holds exactly; identical inputs give identical traces.
inline SynthClient generate_client(const SynthProfile& profile,
                                   const std::vector<ApplianceSpec>& appliances, std::size_t days,
                                   Seed seed, double sample_period_s = 6.0,
                                   std::int64_t start_epoch_s = 0) {
  if (appliances.empty()) throw ConfigError("appliance list must not be empty");
  if (days < 1) throw ConfigError("days must be at least 1");
  if (!(sample_period_s > 0.0)) throw ConfigError("sample period must be positive");
  const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(days) * 86400.0 /
                                                       sample_period_s));
  SynthClient out;
  for (std::size_t i = 0; i < appliances.size(); ++i) {
    const ApplianceSpec& spec = appliances[i];
    TimeSeries ts{sample_period_s, std::vector<double>(n, 0.0), start_epoch_s};
    if (auto it = profile.models.find(spec.name); it != profile.models.end()) {
      validate_model(it->second, spec);
      Rng rng(derive_seed(seed, spec.name));
      if (const auto* c = std::get_if<CyclicModel>(&it->second)) {
        detail::fill_cyclic(ts.values, *c, sample_period_s, rng);
      } else {
        detail::fill_activations(ts.values, std::get<ActivationModel>(it->second),
                                 sample_period_s, days, rng);
      }
    }
    out.appliances.push_back(std::move(ts));
  }
  for (const auto& [name, model] : profile.models) {
    bool known = false;
    for (const auto& a : appliances) known = known || a.name == name;
    if (!known) throw ConfigError("profile models unknown appliance '" + name + "'");
  }

  out.residual = TimeSeries{sample_period_s, std::vector<double>(n, 0.0), start_epoch_s};
  {
    Rng rng(derive_seed(seed, "residual"));
    std::normal_distribution<double> noise(0.0, 1.0);
    for (double& v : out.residual.values) {
      const double r = profile.base_load_w + (profile.residual_noise_w > 0.0
                                                  ? profile.residual_noise_w * noise(rng)
                                                  : 0.0);
      v = quantize_w(std::max(r, 0.0));
    }
    if (profile.spikes.rate_per_day > 0.0) {
      std::vector<double> spikes(n, 0.0);
      ActivationModel m{profile.spikes.rate_per_day, {profile.spikes.power_w},
                        {profile.spikes.duration_s}, 0.0, 24.0};
      detail::fill_activations(spikes, m, sample_period_s, days, rng);
      for (std::size_t t = 0; t < n; ++t) out.residual.values[t] += spikes[t];
    }
  }

  out.aggregate = TimeSeries{sample_period_s, std::vector<double>(n, 0.0), start_epoch_s};
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0.0;
    for (const auto& a : out.appliances) s += a.values[t];
    out.aggregate.values[t] = s + out.residual.values[t];
  }
  return out;
}

}  // namespace dp2nilm::data
