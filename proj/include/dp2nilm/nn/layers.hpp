#pragma once

// Forward/backward kernels for the fixed layer set of the disaggregation
// network. Activations are rank-3 tensors laid out (batch, channel, time).
// Backward kernels accumulate into parameter-gradient spans.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dp2nilm/core/error.hpp"
#include "dp2nilm/core/rng.hpp"
#include "dp2nilm/nn/tensor.hpp"

namespace dp2nilm::nn {

// Same-padded 1-D convolution, stride 1. weight is (out, in, kernel), kernel odd.
inline Tensor conv1d_forward(const Tensor& in, std::span<const double> weight,
                             std::span<const double> bias, std::size_t out_channels,
                             std::size_t kernel) {
  const std::size_t batch = in.dim(0), cin = in.dim(1), len = in.dim(2);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
  Tensor out({batch, out_channels, len});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < out_channels; ++co) {
      double* o = &out(b, co, 0);
      std::fill(o, o + len, bias[co]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* x = &in(b, ci, 0);
        const double* w = &weight[(co * cin + ci) * kernel];
        for (std::size_t k = 0; k < kernel; ++k) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
          const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
          const std::size_t t1 =
              shift > 0 ? len - static_cast<std::size_t>(shift) : len;
          const double wk = w[k];
          for (std::size_t t = t0; t < t1; ++t) o[t] += wk * x[t + shift];
        }
      }
    }
  }
  return out;
}

// Pass in_grad == nullptr to skip the input gradient (first layer).
inline void conv1d_backward(const Tensor& in, std::span<const double> weight,
                            const Tensor& out_grad, std::size_t kernel,
                            std::span<double> weight_grad, std::span<double> bias_grad,
                            Tensor* in_grad) {
  const std::size_t batch = in.dim(0), cin = in.dim(1), len = in.dim(2);
  const std::size_t cout = out_grad.dim(1);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
  if (in_grad) *in_grad = Tensor(in.shape);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      const double* g = &out_grad(b, co, 0);
      double bsum = 0.0;
      for (std::size_t t = 0; t < len; ++t) bsum += g[t];
      bias_grad[co] += bsum;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* x = &in(b, ci, 0);
        const std::size_t widx = (co * cin + ci) * kernel;
        double* dx = in_grad ? &(*in_grad)(b, ci, 0) : nullptr;
        for (std::size_t k = 0; k < kernel; ++k) {
          const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
          const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
          const std::size_t t1 =
              shift > 0 ? len - static_cast<std::size_t>(shift) : len;
          double acc = 0.0;
          for (std::size_t t = t0; t < t1; ++t) acc += g[t] * x[t + shift];
          weight_grad[widx + k] += acc;
          if (dx) {
            const double wk = weight[widx + k];
            for (std::size_t t = t0; t < t1; ++t) dx[t + shift] += wk * g[t];
          }
        }
      }
    }
  }
}

// Transposed convolution with kernel == stride (no overlap). weight is
// (in, out, stride); output length is len * stride.
inline Tensor conv_transpose1d_forward(const Tensor& in, std::span<const double> weight,
                                       std::span<const double> bias,
                                       std::size_t out_channels, std::size_t stride) {
  const std::size_t batch = in.dim(0), cin = in.dim(1), len = in.dim(2);
  Tensor out({batch, out_channels, len * stride});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < out_channels; ++co) {
      double* o = &out(b, co, 0);
      std::fill(o, o + len * stride, bias[co]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* x = &in(b, ci, 0);
        const double* w = &weight[(ci * out_channels + co) * stride];
        for (std::size_t t = 0; t < len; ++t) {
          const double xv = x[t];
          for (std::size_t j = 0; j < stride; ++j) o[t * stride + j] += xv * w[j];
        }
      }
    }
  }
  return out;
}

inline void conv_transpose1d_backward(const Tensor& in, std::span<const double> weight,
                                      const Tensor& out_grad, std::size_t stride,
                                      std::span<double> weight_grad,
                                      std::span<double> bias_grad, Tensor* in_grad) {
  const std::size_t batch = in.dim(0), cin = in.dim(1), len = in.dim(2);
  const std::size_t cout = out_grad.dim(1);
  if (in_grad) *in_grad = Tensor(in.shape);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < cout; ++co) {
      const double* g = &out_grad(b, co, 0);
      double bsum = 0.0;
      for (std::size_t t = 0; t < len * stride; ++t) bsum += g[t];
      bias_grad[co] += bsum;
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* x = &in(b, ci, 0);
        const std::size_t widx = (ci * cout + co) * stride;
        double* dx = in_grad ? &(*in_grad)(b, ci, 0) : nullptr;
        for (std::size_t t = 0; t < len; ++t) {
          const double* gt = g + t * stride;
          double dsum = 0.0;
          for (std::size_t j = 0; j < stride; ++j) {
            weight_grad[widx + j] += x[t] * gt[j];
            dsum += weight[widx + j] * gt[j];
          }
          if (dx) dx[t] += dsum;
        }
      }
    }
  }
}

inline void relu_inplace(Tensor& t) {
  for (double& v : t.data) v = v > 0.0 ? v : 0.0;
}

// Gradient through a ReLU given its output.
inline void relu_backward_inplace(const Tensor& out, Tensor& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (out.data[i] <= 0.0) grad.data[i] = 0.0;
  }
}

// Inverted dropout: kept units are scaled by 1/(1-p). Returns the mask.
inline std::vector<double> dropout_inplace(Tensor& t, double p, Rng& rng) {
  std::vector<double> mask(t.data.size());
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = keep(rng) ? scale : 0.0;
    t.data[i] *= mask[i];
  }
  return mask;
}

inline void apply_mask_inplace(Tensor& grad, const std::vector<double>& mask) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] *= mask[i];
}

// Non-overlapping max pool. `argmax` receives the flat input index per output.
inline Tensor maxpool1d_forward(const Tensor& in, std::size_t stride,
                                std::vector<std::size_t>& argmax) {
  const std::size_t batch = in.dim(0), ch = in.dim(1), len = in.dim(2);
  const std::size_t out_len = len / stride;
  Tensor out({batch, ch, out_len});
  argmax.assign(out.size(), 0);
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    const std::size_t base = bc * len;
    for (std::size_t t = 0; t < out_len; ++t) {
      std::size_t best = base + t * stride;
      for (std::size_t j = 1; j < stride; ++j) {
        const std::size_t idx = base + t * stride + j;
        if (in.data[idx] > in.data[best]) best = idx;
      }
      out.data[bc * out_len + t] = in.data[best];
      argmax[bc * out_len + t] = best;
    }
  }
  return out;
}

inline Tensor maxpool1d_backward(const Shape& in_shape, const Tensor& out_grad,
                                 const std::vector<std::size_t>& argmax) {
  Tensor in_grad(in_shape);
  for (std::size_t i = 0; i < out_grad.data.size(); ++i) {
    in_grad.data[argmax[i]] += out_grad.data[i];
  }
  return in_grad;
}

// Non-overlapping average pool with window `kernel`.
inline Tensor avgpool1d_forward(const Tensor& in, std::size_t kernel) {
  const std::size_t batch = in.dim(0), ch = in.dim(1), len = in.dim(2);
  const std::size_t out_len = len / kernel;
  Tensor out({batch, ch, out_len});
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    for (std::size_t t = 0; t < out_len; ++t) {
      double s = 0.0;
      for (std::size_t j = 0; j < kernel; ++j) s += in.data[bc * len + t * kernel + j];
      out.data[bc * out_len + t] = s / static_cast<double>(kernel);
    }
  }
  return out;
}

inline Tensor avgpool1d_backward(const Shape& in_shape, const Tensor& out_grad,
                                 std::size_t kernel) {
  Tensor in_grad(in_shape);
  const std::size_t len = in_shape[2];
  const std::size_t out_len = out_grad.dim(2);
  const std::size_t rows = in_shape[0] * in_shape[1];
  for (std::size_t bc = 0; bc < rows; ++bc) {
    for (std::size_t t = 0; t < out_len; ++t) {
      const double g = out_grad.data[bc * out_len + t] / static_cast<double>(kernel);
      for (std::size_t j = 0; j < kernel; ++j) in_grad.data[bc * len + t * kernel + j] = g;
    }
  }
  return in_grad;
}

inline Tensor upsample_nearest_forward(const Tensor& in, std::size_t factor) {
  const std::size_t batch = in.dim(0), ch = in.dim(1), len = in.dim(2);
  Tensor out({batch, ch, len * factor});
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    for (std::size_t t = 0; t < len; ++t) {
      const double v = in.data[bc * len + t];
      for (std::size_t j = 0; j < factor; ++j) out.data[(bc * len + t) * factor + j] = v;
    }
  }
  return out;
}

inline Tensor upsample_nearest_backward(const Tensor& out_grad, std::size_t factor) {
  const std::size_t batch = out_grad.dim(0), ch = out_grad.dim(1);
  const std::size_t len = out_grad.dim(2) / factor;
  Tensor in_grad({batch, ch, len});
  for (std::size_t i = 0; i < in_grad.data.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < factor; ++j) s += out_grad.data[i * factor + j];
    in_grad.data[i] = s;
  }
  return in_grad;
}

// Concatenates along the channel axis; all parts share batch and length.
inline Tensor concat_channels(std::span<const Tensor* const> parts) {
  const std::size_t batch = parts.front()->dim(0), len = parts.front()->dim(2);
  std::size_t total = 0;
  for (const Tensor* p : parts) {
    if (p->dim(0) != batch || p->dim(2) != len) {
      throw ShapeError("concat: mismatched batch or length");
    }
    total += p->dim(1);
  }
  Tensor out({batch, total, len});
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t c0 = 0;
    for (const Tensor* p : parts) {
      const std::size_t n = p->dim(1) * len;
      std::copy_n(&(*p)(b, 0, 0), n, &out(b, c0, 0));
      c0 += p->dim(1);
    }
  }
  return out;
}

// Channel slice [c0, c0 + count) of a (batch, channel, time) tensor.
inline Tensor slice_channels(const Tensor& in, std::size_t c0, std::size_t count) {
  const std::size_t batch = in.dim(0), len = in.dim(2);
  Tensor out({batch, count, len});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(&in(b, c0, 0), count * len, &out(b, 0, 0));
  }
  return out;
}

inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Binary cross-entropy evaluated on a logit: -[y log s(z) + (1-y) log(1-s(z))].
inline double bce_with_logit(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace dp2nilm::nn
