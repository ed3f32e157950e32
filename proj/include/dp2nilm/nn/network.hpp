#pragma once

// Compact pyramid-pooling sequence-to-sequence network for appliance state
// detection:
//
//   encoder   conv blocks (conv + ReLU + dropout), max-pooled between blocks
//             (never after the last one)
//   pyramid   for each bin count b: average pool to b cells, 1x1 conv that
//             reduces channels to a quarter, ReLU, nearest upsample; the
//             results are concatenated with the encoder output
//   decoder   transposed conv back to window resolution + ReLU, then a 1x1
//             conv emitting one logit per appliance per timestep

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dp2nilm/core/error.hpp"
#include "dp2nilm/core/rng.hpp"
#include "dp2nilm/nn/layers.hpp"
#include "dp2nilm/nn/params.hpp"
#include "dp2nilm/nn/tensor.hpp"

namespace dp2nilm::nn {

struct NetworkSpec {
  std::size_t window_len = 120;
  std::size_t appliance_count = 3;
  std::vector<std::size_t> encoder_channels = {8, 16, 32, 32};
  std::size_t encoder_downsample = 4;
  std::vector<std::size_t> pooling_bins = {1, 2, 3, 6};
  std::size_t kernel_size = 5;
  std::size_t decoder_channels = 16;
  double dropout_p = 0.1;
  std::string activation = "relu";

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Max-pool strides after each encoder block except the last. The total
/// downsample is split into prime factors, smallest first; blocks without a
/// factor are not pooled (stride 1).
inline std::vector<std::size_t> pool_strides(const NetworkSpec& spec) {
  std::vector<std::size_t> primes;
  std::size_t n = spec.encoder_downsample;
  for (std::size_t p = 2; n > 1 && p * p <= n; ++p) {
    while (n % p == 0) {
      primes.push_back(p);
      n /= p;
    }
  }
  if (n > 1) primes.push_back(n);
  const std::size_t pools = spec.encoder_channels.empty() ? 0 : spec.encoder_channels.size() - 1;
  if (primes.size() > pools) {
    throw ConfigError("encoder_downsample " + std::to_string(spec.encoder_downsample) +
                      " needs " + std::to_string(primes.size()) +
                      " pooling stages but the encoder has only " + std::to_string(pools));
  }
  std::vector<std::size_t> strides(pools, 1);
  std::copy(primes.begin(), primes.end(), strides.begin());
  return strides;
}

inline std::size_t reduced_channels(std::size_t c) { return std::max<std::size_t>(1, c / 4); }

inline void validate(const NetworkSpec& spec) {
  if (spec.window_len == 0) throw ConfigError("window_len must be positive");
  if (spec.appliance_count == 0) throw ConfigError("appliance_count must be positive");
  if (spec.encoder_channels.empty()) throw ConfigError("encoder needs at least one block");
  for (std::size_t c : spec.encoder_channels) {
    if (c == 0) throw ConfigError("encoder channel widths must be positive");
  }
  if (spec.encoder_downsample == 0 || spec.window_len % spec.encoder_downsample != 0) {
    throw ConfigError("encoder_downsample " + std::to_string(spec.encoder_downsample) +
                      " must divide window_len " + std::to_string(spec.window_len));
  }
  pool_strides(spec);
  const std::size_t reduced = spec.window_len / spec.encoder_downsample;
  if (spec.pooling_bins.empty()) throw ConfigError("pooling_bins must not be empty");
  for (std::size_t b : spec.pooling_bins) {
    if (b == 0 || reduced % b != 0) {
      throw ConfigError("pooling bin " + std::to_string(b) + " does not divide reduced length " +
                        std::to_string(reduced));
    }
  }
  if (spec.kernel_size == 0 || spec.kernel_size % 2 == 0) {
    throw ConfigError("kernel_size must be odd");
  }
  if (spec.decoder_channels == 0) throw ConfigError("decoder_channels must be positive");
  if (!(spec.dropout_p >= 0.0 && spec.dropout_p < 1.0)) {
    throw ConfigError("dropout_p must lie in [0, 1)");
  }
  if (spec.activation != "relu") {
    throw ConfigError("unsupported activation '" + spec.activation + "'");
  }
}

inline std::string encoder_layer(std::size_t i) { return "encoder." + std::to_string(i); }
inline std::string pyramid_layer(std::size_t i) { return "pyramid." + std::to_string(i); }
inline constexpr const char* kDecoderUpLayer = "decoder.up";
inline constexpr const char* kDecoderOutLayer = "decoder.out";

inline Manifest build_manifest(const NetworkSpec& spec) {
  validate(spec);
  Manifest m;
  std::size_t offset = 0;
  auto add = [&](std::string layer, std::string role, Shape shape) {
    ParamEntry e{std::move(layer), std::move(role), std::move(shape), offset};
    offset += e.size();
    m.push_back(std::move(e));
  };
  const std::size_t k = spec.kernel_size;
  std::size_t cin = 1;
  for (std::size_t i = 0; i < spec.encoder_channels.size(); ++i) {
    const std::size_t cout = spec.encoder_channels[i];
    add(encoder_layer(i), "weight", {cout, cin, k});
    add(encoder_layer(i), "bias", {cout});
    cin = cout;
  }
  const std::size_t feat = cin;
  const std::size_t red = reduced_channels(feat);
  for (std::size_t j = 0; j < spec.pooling_bins.size(); ++j) {
    add(pyramid_layer(j), "weight", {red, feat, 1});
    add(pyramid_layer(j), "bias", {red});
  }
  const std::size_t cat = feat + red * spec.pooling_bins.size();
  add(kDecoderUpLayer, "weight", {cat, spec.decoder_channels, spec.encoder_downsample});
  add(kDecoderUpLayer, "bias", {spec.decoder_channels});
  add(kDecoderOutLayer, "weight", {spec.appliance_count, spec.decoder_channels, 1});
  add(kDecoderOutLayer, "bias", {spec.appliance_count});
  return m;
}

/// Uniform fan-in initialization, bound 1/sqrt(fan_in), deterministic in seed.
inline ModelParams build_network(const NetworkSpec& spec, Seed seed) {
  ModelParams p;
  p.manifest = build_manifest(spec);
  p.values.assign(manifest_size(p.manifest), 0.0);
  Rng rng(seed);
  for (std::size_t i = 0; i < p.manifest.size(); ++i) {
    const ParamEntry& e = p.manifest[i];
    // Biases share the fan-in of the weight entry that precedes them.
    const ParamEntry& w = e.role == "weight" ? e : p.manifest[i - 1];
    std::size_t fan_in = 0;
    if (w.layer == kDecoderUpLayer) {
      fan_in = w.shape[0];
    } else {
      fan_in = w.shape[1] * w.shape[2];
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : p.view(e)) v = dist(rng);
  }
  return p;
}

struct ForwardMode {
  bool train = false;
  Seed seed = 0;
};

namespace detail {

struct EncoderCache {
  Tensor input;
  Tensor activated;  // post-ReLU, pre-dropout
  std::vector<double> dropout_mask;
  Tensor pooled_input;  // post-dropout, input to max pool
  std::vector<std::size_t> argmax;
  std::size_t stride = 1;
};

struct PyramidCache {
  Tensor pooled;
  Tensor reduced;  // post-ReLU
};

struct ForwardCache {
  std::vector<EncoderCache> encoder;
  Tensor features;
  std::vector<PyramidCache> pyramid;
  Tensor concat;
  Tensor decoded;  // post-ReLU
  Tensor logits;
};

inline void check_params(const ModelParams& params, const NetworkSpec& spec) {
  if (params.manifest != build_manifest(spec)) {
    throw ShapeError("parameters do not match the network spec");
  }
}

inline ForwardCache run_forward(const ModelParams& params, const NetworkSpec& spec,
                                const Tensor& batch, ForwardMode mode) {
  check_params(params, spec);
  if (batch.rank() != 2 || batch.dim(1) != spec.window_len) {
    throw ShapeError("input batch must be B x " + std::to_string(spec.window_len) + ", got " +
                     shape_string(batch.shape));
  }
  const std::size_t bsz = batch.dim(0);
  const auto strides = pool_strides(spec);
  const std::size_t k = spec.kernel_size;
  Rng rng(mode.seed);
  ForwardCache cache;
  Tensor h({bsz, 1, spec.window_len}, batch.data);
  for (std::size_t i = 0; i < spec.encoder_channels.size(); ++i) {
    EncoderCache ec;
    const auto& w = params.entry(encoder_layer(i), "weight");
    const auto& b = params.entry(encoder_layer(i), "bias");
    ec.input = std::move(h);
    Tensor a = conv1d_forward(ec.input, params.view(w), params.view(b),
                              spec.encoder_channels[i], k);
    relu_inplace(a);
    ec.activated = a;
    if (mode.train && spec.dropout_p > 0.0) {
      ec.dropout_mask = dropout_inplace(a, spec.dropout_p, rng);
    }
    ec.stride = i < strides.size() ? strides[i] : 1;
    if (ec.stride > 1) {
      ec.pooled_input = std::move(a);
      h = maxpool1d_forward(ec.pooled_input, ec.stride, ec.argmax);
    } else {
      h = std::move(a);
    }
    cache.encoder.push_back(std::move(ec));
  }
  cache.features = std::move(h);
  const std::size_t len = cache.features.dim(2);
  const std::size_t red = reduced_channels(cache.features.dim(1));
  std::vector<Tensor> upsampled;
  upsampled.reserve(spec.pooling_bins.size());
  for (std::size_t j = 0; j < spec.pooling_bins.size(); ++j) {
    PyramidCache pc;
    const std::size_t cell = len / spec.pooling_bins[j];
    pc.pooled = avgpool1d_forward(cache.features, cell);
    const auto& w = params.entry(pyramid_layer(j), "weight");
    const auto& b = params.entry(pyramid_layer(j), "bias");
    pc.reduced = conv1d_forward(pc.pooled, params.view(w), params.view(b), red, 1);
    relu_inplace(pc.reduced);
    upsampled.push_back(upsample_nearest_forward(pc.reduced, cell));
    cache.pyramid.push_back(std::move(pc));
  }
  std::vector<const Tensor*> parts{&cache.features};
  for (const auto& u : upsampled) parts.push_back(&u);
  cache.concat = concat_channels(parts);
  {
    const auto& w = params.entry(kDecoderUpLayer, "weight");
    const auto& b = params.entry(kDecoderUpLayer, "bias");
    cache.decoded = conv_transpose1d_forward(cache.concat, params.view(w), params.view(b),
                                             spec.decoder_channels, spec.encoder_downsample);
    relu_inplace(cache.decoded);
  }
  {
    const auto& w = params.entry(kDecoderOutLayer, "weight");
    const auto& b = params.entry(kDecoderOutLayer, "bias");
    cache.logits = conv1d_forward(cache.decoded, params.view(w), params.view(b),
                                  spec.appliance_count, 1);
  }
  if (!cache.logits.all_finite()) throw NumericError("non-finite network output");
  return cache;
}

inline std::vector<double> run_backward(const ModelParams& params, const NetworkSpec& spec,
                                        ForwardCache& cache, const Tensor& logit_grad) {
  std::vector<double> grad(params.values.size(), 0.0);
  auto gview = [&](const ParamEntry& e) { return std::span<double>(grad.data() + e.offset, e.size()); };
  Tensor g;
  {
    const auto& w = params.entry(kDecoderOutLayer, "weight");
    const auto& b = params.entry(kDecoderOutLayer, "bias");
    conv1d_backward(cache.decoded, params.view(w), logit_grad, 1, gview(w), gview(b), &g);
  }
  relu_backward_inplace(cache.decoded, g);
  Tensor gcat;
  {
    const auto& w = params.entry(kDecoderUpLayer, "weight");
    const auto& b = params.entry(kDecoderUpLayer, "bias");
    conv_transpose1d_backward(cache.concat, params.view(w), g, spec.encoder_downsample,
                              gview(w), gview(b), &gcat);
  }
  const std::size_t feat = cache.features.dim(1);
  const std::size_t len = cache.features.dim(2);
  const std::size_t red = reduced_channels(feat);
  Tensor gfeat = slice_channels(gcat, 0, feat);
  for (std::size_t j = 0; j < spec.pooling_bins.size(); ++j) {
    auto& pc = cache.pyramid[j];
    const std::size_t cell = len / spec.pooling_bins[j];
    Tensor gu = slice_channels(gcat, feat + j * red, red);
    Tensor gr = upsample_nearest_backward(gu, cell);
    relu_backward_inplace(pc.reduced, gr);
    const auto& w = params.entry(pyramid_layer(j), "weight");
    const auto& b = params.entry(pyramid_layer(j), "bias");
    Tensor gp;
    conv1d_backward(pc.pooled, params.view(w), gr, 1, gview(w), gview(b), &gp);
    Tensor gf = avgpool1d_backward(cache.features.shape, gp, cell);
    for (std::size_t i = 0; i < gfeat.data.size(); ++i) gfeat.data[i] += gf.data[i];
  }
  g = std::move(gfeat);
  for (std::size_t ii = spec.encoder_channels.size(); ii-- > 0;) {
    auto& ec = cache.encoder[ii];
    if (ec.stride > 1) g = maxpool1d_backward(ec.pooled_input.shape, g, ec.argmax);
    if (!ec.dropout_mask.empty()) apply_mask_inplace(g, ec.dropout_mask);
    relu_backward_inplace(ec.activated, g);
    const auto& w = params.entry(encoder_layer(ii), "weight");
    const auto& b = params.entry(encoder_layer(ii), "bias");
    Tensor gin;
    conv1d_backward(ec.input, params.view(w), g, spec.kernel_size, gview(w), gview(b),
                    ii == 0 ? nullptr : &gin);
    g = std::move(gin);
  }
  return grad;
}

}  // namespace detail

/// Per-appliance, per-timestep logits, shape B x I x window_len.
inline Tensor forward_logits(const ModelParams& params, const NetworkSpec& spec,
                             const Tensor& batch, ForwardMode mode = {}) {
  return detail::run_forward(params, spec, batch, mode).logits;
}

/// ON-state probabilities in (0, 1), shape B x I x window_len.
inline Tensor forward(const ModelParams& params, const NetworkSpec& spec, const Tensor& batch,
                      ForwardMode mode = {}) {
  Tensor out = forward_logits(params, spec, batch, mode);
  for (double& v : out.data) v = logistic(v);
  return out;
}

inline void require_binary_targets(const Tensor& targets, const NetworkSpec& spec,
                                   std::size_t batch) {
  if (targets.rank() != 3 || targets.dim(0) != batch || targets.dim(1) != spec.appliance_count ||
      targets.dim(2) != spec.window_len) {
    throw ShapeError("targets must be " + std::to_string(batch) + "x" +
                     std::to_string(spec.appliance_count) + "x" +
                     std::to_string(spec.window_len) + ", got " + shape_string(targets.shape));
  }
  for (double y : targets.data) {
    if (y != 0.0 && y != 1.0) throw DataError("targets must be binary");
  }
}

struct LossAndGrad {
  double loss = 0.0;
  Gradient grad;
};

/// Mean binary cross-entropy over B x I x window_len and its exact gradient.
inline LossAndGrad loss_and_grad(const ModelParams& params, const NetworkSpec& spec,
                                 const Tensor& batch, const Tensor& targets,
                                 ForwardMode mode = {}) {
  require_binary_targets(targets, spec, batch.rank() == 2 ? batch.dim(0) : 0);
  auto cache = detail::run_forward(params, spec, batch, mode);
  const double count = static_cast<double>(cache.logits.size());
  Tensor dlogits(cache.logits.shape);
  double loss = 0.0;
  for (std::size_t i = 0; i < cache.logits.size(); ++i) {
    const double z = cache.logits.data[i];
    const double y = targets.data[i];
    loss += bce_with_logit(z, y);
    dlogits.data[i] = (logistic(z) - y) / count;
  }
  LossAndGrad out;
  out.loss = loss / count;
  out.grad.values = detail::run_backward(params, spec, cache, dlogits);
  out.grad.sample_count = batch.dim(0);
  for (double v : out.grad.values) {
    if (!std::isfinite(v)) throw NumericError("non-finite gradient");
  }
  return out;
}

/// Eval-mode loss of each window separately (mean over I x window_len).
inline std::vector<double> per_window_loss(const ModelParams& params, const NetworkSpec& spec,
                                           const Tensor& batch, const Tensor& targets) {
  require_binary_targets(targets, spec, batch.rank() == 2 ? batch.dim(0) : 0);
  const Tensor logits = forward_logits(params, spec, batch);
  const std::size_t per = spec.appliance_count * spec.window_len;
  std::vector<double> out(batch.dim(0), 0.0);
  for (std::size_t b = 0; b < out.size(); ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i) {
      s += bce_with_logit(logits.data[b * per + i], targets.data[b * per + i]);
    }
    out[b] = s / static_cast<double>(per);
  }
  return out;
}

/// Mean binary cross-entropy on probabilities, clamped away from 0 and 1.
inline double binary_cross_entropy(const Tensor& probs, const Tensor& targets) {
  if (probs.shape != targets.shape) throw ShapeError("probability/target shape mismatch");
  constexpr double kEps = 1e-12;
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs.data[i], kEps, 1.0 - kEps);
    const double y = targets.data[i];
    s -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return s / static_cast<double>(probs.size());
}

}  // namespace dp2nilm::nn
