#pragma once

#include <algorithm>
#include <vector>

#include "dp2nilm/nn/params.hpp"

namespace dp2nilm::nn {

struct OptimState {
  std::vector<double> velocity;
  double lr = 1e-4;
  double momentum = 0.5;

  static OptimState for_params(const ModelParams& p, double lr, double momentum) {
    return OptimState{std::vector<double>(p.values.size(), 0.0), lr, momentum};
  }
  void reset() { std::fill(velocity.begin(), velocity.end(), 0.0); }
};

// Heavy-ball momentum: v <- m*v + g; w <- w - lr*v.
inline void sgd_step_inplace(ModelParams& params, const Gradient& grad, OptimState& opt) {
  require_aligned(params, grad);
  if (opt.velocity.size() != params.values.size()) {
    throw ShapeError("optimizer velocity length does not match parameters");
  }
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    opt.velocity[i] = opt.momentum * opt.velocity[i] + grad.values[i];
    params.values[i] -= opt.lr * opt.velocity[i];
  }
}

inline ModelParams sgd_step(ModelParams params, const Gradient& grad, OptimState& opt) {
  sgd_step_inplace(params, grad, opt);
  return params;
}

}  // namespace dp2nilm::nn
