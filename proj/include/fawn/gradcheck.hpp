#ifndef FAWN_GRADCHECK_HPP
#define FAWN_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fawn/errors.hpp"
#include "fawn/tensor.hpp"

namespace fawn {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central-difference gradient of f at x, one element at a time.
inline Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double step = 1e-5) {
  Tensor grad(x.shape(), 0.0);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = f(probe);
    probe[i] = orig - step;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

/// Central differences restricted to the given flat indices.
inline std::vector<double> finite_diff_grad_at(const ScalarFn& f, const Tensor& x, std::span<const std::size_t> indices,
                                               double step = 1e-5) {
  std::vector<double> out;
  out.reserve(indices.size());
  Tensor probe = x;
  for (std::size_t i : indices) {
    if (i >= x.size()) throw IndexError("finite_diff_grad_at: index out of range");
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = f(probe);
    probe[i] = orig - step;
    const double down = f(probe);
    probe[i] = orig;
    out.push_back((up - down) / (2.0 * step));
  }
  return out;
}

/// ||a - b||_inf / max(1, ||b||_inf), with b the reference.
inline double gradient_rel_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("gradient_rel_error: length mismatch");
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    ref = std::max(ref, std::abs(b[i]));
  }
  return diff / std::max(1.0, ref);
}

inline double gradient_rel_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("gradient_rel_error: shape mismatch");
  return gradient_rel_error(a.data(), b.data());
}

}  // namespace fawn

#endif  // FAWN_GRADCHECK_HPP
