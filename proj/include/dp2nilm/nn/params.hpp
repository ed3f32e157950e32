#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dp2nilm/core/error.hpp"
#include "dp2nilm/nn/tensor.hpp"

namespace dp2nilm::nn {

struct ParamEntry {
  std::string layer;
  std::string role;  // "weight" or "bias"
  Shape shape;
  std::size_t offset = 0;

  std::size_t size() const { return shape_product(shape); }
  friend bool operator==(const ParamEntry&, const ParamEntry&) = default;
};

using Manifest = std::vector<ParamEntry>;

inline std::size_t manifest_size(const Manifest& m) {
  std::size_t n = 0;
  for (const auto& e : m) n += e.size();
  return n;
}

/// Flat parameter vector plus the layer-shape manifest that interprets it.
struct ModelParams {
  std::vector<double> values;
  Manifest manifest;

  std::size_t size() const { return values.size(); }

  const ParamEntry& entry(const std::string& layer, const std::string& role) const {
    for (const auto& e : manifest) {
      if (e.layer == layer && e.role == role) return e;
    }
    throw ShapeError("no parameter " + layer + "." + role + " in manifest");
  }
  std::span<double> view(const ParamEntry& e) { return {values.data() + e.offset, e.size()}; }
  std::span<const double> view(const ParamEntry& e) const {
    return {values.data() + e.offset, e.size()};
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct Gradient {
  std::vector<double> values;
  std::size_t sample_count = 0;

  std::size_t size() const { return values.size(); }
};

inline void require_same_manifest(const ModelParams& a, const ModelParams& b) {
  if (a.manifest != b.manifest || a.values.size() != b.values.size()) {
    throw ShapeError("parameter manifests do not match");
  }
}

inline void require_aligned(const ModelParams& p, const Gradient& g) {
  if (p.values.size() != g.values.size()) {
    throw ShapeError("gradient length " + std::to_string(g.values.size()) +
                     " does not match parameter length " +
                     std::to_string(p.values.size()));
  }
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// alpha * a + (1 - alpha) * b over matching manifests.
inline ModelParams interpolate(const ModelParams& a, const ModelParams& b, double alpha) {
  require_same_manifest(a, b);
  ModelParams out = a;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = alpha * a.values[i] + (1.0 - alpha) * b.values[i];
  }
  return out;
}

}  // namespace dp2nilm::nn
