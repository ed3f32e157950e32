#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dp2nilm/core/error.hpp"
#include "dp2nilm/core/rng.hpp"
#include "dp2nilm/nn/params.hpp"

namespace dp2nilm::dp {

enum class PrivacyMode { kNone, kGlobal, kLocal };

inline const char* mode_name(PrivacyMode m) {
  switch (m) {
    case PrivacyMode::kNone: return "none";
    case PrivacyMode::kGlobal: return "global";
    case PrivacyMode::kLocal: return "local";
  }
  return "none";
}

inline PrivacyMode parse_mode(const std::string& s) {
  if (s == "none") return PrivacyMode::kNone;
  if (s == "global") return PrivacyMode::kGlobal;
  if (s == "local") return PrivacyMode::kLocal;
  throw ConfigError("unknown privacy mode '" + s + "'");
}

struct PrivacyConfig {
  PrivacyMode mode = PrivacyMode::kNone;
  double epsilon = 0.0;
  double delta = 1e-5;
  double clip_norm = 4.0;
  // Noise multiplier. Unset means calibrated from (epsilon, delta); zero
  // disables noise and accounting.
  std::optional<double> sigma;
  std::size_t max_rounds = 10;

  friend bool operator==(const PrivacyConfig&, const PrivacyConfig&) = default;
};

/// sqrt(2 ln(1.25 / delta)) / epsilon.
inline double sigma_for(double epsilon, double delta) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  return std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

inline void validate(const PrivacyConfig& cfg) {
  if (cfg.mode == PrivacyMode::kNone) return;
  if (!(cfg.epsilon > 0.0)) throw ConfigError("privacy epsilon must be positive");
  if (!(cfg.delta > 0.0 && cfg.delta < 1.0)) throw ConfigError("privacy delta must lie in (0, 1)");
  if (!(cfg.clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
  if (cfg.sigma && !(*cfg.sigma >= 0.0)) throw ConfigError("sigma must be non-negative");
  if (cfg.max_rounds == 0) throw ConfigError("max_rounds must be positive");
}

inline double effective_sigma(const PrivacyConfig& cfg) {
  return cfg.sigma ? *cfg.sigma : sigma_for(cfg.epsilon, cfg.delta);
}

/// Projects onto the L2 ball of radius c.
inline nn::Gradient clip(nn::Gradient g, double c) {
  if (!(c > 0.0)) throw ConfigError("clip norm must be positive");
  const double norm = nn::l2_norm(g.values);
  if (norm > c) {
    const double scale = c / norm;
    for (double& v : g.values) v *= scale;
    // Rounding can leave the norm a hair above c; shrink until it is not.
    while (nn::l2_norm(g.values) > c) {
      for (double& v : g.values) v = std::nextafter(v, 0.0);
    }
  }
  return g;
}

/// Adds i.i.d. N(0, noise_std^2) to every coordinate.
inline std::vector<double> gaussian_perturb(std::vector<double> v, double noise_std, Seed seed) {
  if (!(noise_std >= 0.0)) throw ConfigError("noise standard deviation must be non-negative");
  if (noise_std == 0.0) return v;
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, noise_std);
  for (double& x : v) x += n(rng);
  return v;
}

/// Server-side noise scale C * sigma.
inline double global_noise_std(const PrivacyConfig& cfg) {
  return cfg.clip_norm * effective_sigma(cfg);
}

/// Client-side noise scale C * sigma / sqrt(N).
inline double local_noise_std(const PrivacyConfig& cfg, std::size_t client_count) {
  if (client_count == 0) throw ConfigError("client count must be positive");
  return cfg.clip_norm * effective_sigma(cfg) / std::sqrt(static_cast<double>(client_count));
}

inline nn::ModelParams gdpfl_aggregate_hook(nn::ModelParams aggregated, const PrivacyConfig& cfg,
                                            Seed seed) {
  if (cfg.mode != PrivacyMode::kGlobal) {
    throw ConfigError("aggregate noise requires privacy mode 'global'");
  }
  aggregated.values = gaussian_perturb(std::move(aggregated.values), global_noise_std(cfg), seed);
  return aggregated;
}

inline nn::Gradient ldpfl_gradient_hook(nn::Gradient grad, const PrivacyConfig& cfg,
                                        std::size_t client_count, Seed seed) {
  if (cfg.mode != PrivacyMode::kLocal) {
    throw ConfigError("gradient noise requires privacy mode 'local'");
  }
  grad = clip(std::move(grad), cfg.clip_norm);
  grad.values = gaussian_perturb(std::move(grad.values), local_noise_std(cfg, client_count), seed);
  return grad;
}

}  // namespace dp2nilm::dp
