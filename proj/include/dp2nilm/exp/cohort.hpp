#pragma once

// Synthetic client cohorts: a list of household profiles assigned round-robin
// to clients, then generated and preprocessed into training-ready datasets.

#include <cstddef>
#include <string>
#include <vector>

#include "dp2nilm/core/rng.hpp"
#include "dp2nilm/data/dataset.hpp"
#include "dp2nilm/data/synth.hpp"
#include "dp2nilm/fl/parallel.hpp"

namespace dp2nilm::exp {

inline data::ActivationModel dishwasher_model(double rate_per_day = 0.7) {
  return {rate_per_day, {2000.0, 1800.0, 2100.0}, {1200.0, 1500.0, 900.0}, 7.0, 22.0};
}

inline data::ActivationModel washing_machine_model(double rate_per_day = 0.6) {
  return {rate_per_day, {450.0, 1900.0, 350.0, 700.0}, {900.0, 600.0, 1500.0, 480.0}, 7.0, 22.0};
}

/// Three household groups that differ mainly in how their fridge cycles.
inline std::vector<data::SynthProfile> default_profiles() {
  std::vector<data::SynthProfile> out(3);
  const data::CyclicModel fridges[] = {
      {2400.0, 0.40, 120.0, 0.10},
      {3600.0, 0.25, 85.0, 0.15},
      {1500.0, 0.55, 170.0, 0.08},
  };
  const double base[] = {90.0, 60.0, 140.0};
  for (std::size_t g = 0; g < 3; ++g) {
    out[g].models["fridge"] = fridges[g];
    out[g].models["dishwasher"] = dishwasher_model(0.5 + 0.2 * static_cast<double>(g));
    out[g].models["washing_machine"] = washing_machine_model(0.7 - 0.15 * static_cast<double>(g));
    out[g].base_load_w = base[g];
    out[g].residual_noise_w = 15.0;
    out[g].spikes = {1.5, 1500.0, 150.0};
  }
  return out;
}

struct SyntheticCohort {
  std::size_t clients = 9;
  std::size_t days = 30;
  double sample_period_s = 6.0;
  std::vector<data::SynthProfile> profiles = default_profiles();

  friend bool operator==(const SyntheticCohort&, const SyntheticCohort&) = default;
};

/// Client i uses profile i mod |profiles| and data seed derive_seed(data_seed, i).
inline std::vector<data::ClientDataset> build_synthetic_clients(
    const SyntheticCohort& cohort, const std::vector<data::ApplianceSpec>& appliances,
    const data::PreprocessOptions& prep, Seed data_seed, std::size_t workers = 1) {
  if (cohort.clients == 0) throw ConfigError("cohort needs at least one client");
  if (cohort.profiles.empty()) throw ConfigError("cohort needs at least one profile");
  std::vector<data::ClientDataset> out(cohort.clients);
  fl::parallel_for(cohort.clients, workers, [&](std::size_t i) {
    const auto& profile = cohort.profiles[i % cohort.profiles.size()];
    const auto raw = data::generate_client(profile, appliances, cohort.days,
                                           derive_seed(data_seed, i), cohort.sample_period_s);
    out[i] = data::prepare_client(i, raw.aggregate, raw.appliances, appliances, prep);
  });
  return out;
}

}  // namespace dp2nilm::exp
