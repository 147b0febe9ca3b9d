#ifndef FAWN_ADAM_HPP
#define FAWN_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fawn/errors.hpp"
#include "fawn/tensor.hpp"

namespace fawn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, one pair per parameter tensor.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static AdamState for_params(std::span<const Tensor> params) {
    AdamState s;
    for (const Tensor& p : params) {
      s.m.emplace_back(p.shape(), 0.0);
      s.v.emplace_back(p.shape(), 0.0);
    }
    return s;
  }
};

/// One bias-corrected Adam update of every parameter tensor.
inline void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state,
                      const AdamConfig& cfg = {}) {
  if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) +
                     " grads, " + std::to_string(state.m.size()) + " moments");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape() || state.m[i].shape() != params[i].shape() ||
        state.v[i].shape() != params[i].shape()) {
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i) + ": " +
                       shape_str(params[i].shape()) + " vs grad " + shape_str(grads[i].shape()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace fawn

#endif  // FAWN_ADAM_HPP
