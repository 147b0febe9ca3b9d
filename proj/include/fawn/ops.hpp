#ifndef FAWN_OPS_HPP
#define FAWN_OPS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "fawn/errors.hpp"
#include "fawn/graph.hpp"
#include "fawn/tensor.hpp"

// Differentiable primitives. Each op computes its output eagerly and records
// a closure that accumulates input gradients during Graph::backward.

namespace fawn {

namespace detail {

inline void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Four interleaved partial sums; fixed order, so results stay bit-reproducible.
inline double dot(const double* x, const double* y, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += x[i] * y[i];
    s1 += x[i + 1] * y[i + 1];
    s2 += x[i + 2] * y[i + 2];
    s3 += x[i + 3] * y[i + 3];
  }
  for (; i < n; ++i) s0 += x[i] * y[i];
  return (s0 + s1) + (s2 + s3);
}

// Rows of the 3x3 same-padded patch matrix: row (c*9 + ky*3 + kx) holds the
// input pixel feeding every output position through that tap, zero where the
// tap falls into padding.
inline std::vector<double> im2col3x3(const Tensor& in) {
  const std::size_t C = in.dim(0), H = in.dim(1), W = in.dim(2), HW = H * W;
  std::vector<double> cols(C * 9 * HW, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double* src = in.data().data() + c * HW;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* dst = cols.data() + (c * 9 + ky * 3 + kx) * HW;
        const int dy = ky - 1, dx = kx - 1;
        for (int y = 0; y < static_cast<int>(H); ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= static_cast<int>(H)) continue;
          for (int x = 0; x < static_cast<int>(W); ++x) {
            const int sx = x + dx;
            if (sx < 0 || sx >= static_cast<int>(W)) continue;
            dst[y * W + x] = src[sy * W + sx];
          }
        }
      }
    }
  }
  return cols;
}

inline void col2im3x3_add(const std::vector<double>& cols, Tensor& grad_in) {
  const std::size_t C = grad_in.dim(0), H = grad_in.dim(1), W = grad_in.dim(2), HW = H * W;
  for (std::size_t c = 0; c < C; ++c) {
    double* dst = grad_in.data().data() + c * HW;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* src = cols.data() + (c * 9 + ky * 3 + kx) * HW;
        const int dy = ky - 1, dx = kx - 1;
        for (int y = 0; y < static_cast<int>(H); ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= static_cast<int>(H)) continue;
          for (int x = 0; x < static_cast<int>(W); ++x) {
            const int sx = x + dx;
            if (sx < 0 || sx >= static_cast<int>(W)) continue;
            dst[sy * W + sx] += src[y * W + x];
          }
        }
      }
    }
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

}  // namespace detail

inline Var add(Graph& g, Var a, Var b) {
  const Tensor& x = g.value(a);
  const Tensor& y = g.value(b);
  detail::require_same_shape(x, y, "add");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return g.push(OpKind::Add, {a.id, b.id}, std::move(out), [a, b](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_slot(self);
    Tensor& ga = gr.grad_slot(a.id);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    Tensor& gb = gr.grad_slot(b.id);
    for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
  });
}

/// Element-wise product.
inline Var mul(Graph& g, Var a, Var b) {
  const Tensor& x = g.value(a);
  const Tensor& y = g.value(b);
  detail::require_same_shape(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return g.push(OpKind::Mul, {a.id, b.id}, std::move(out), [a, b](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_slot(self);
    const Tensor& x = gr.value_of(a.id);
    const Tensor& y = gr.value_of(b.id);
    Tensor& ga = gr.grad_slot(a.id);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i];
    Tensor& gb = gr.grad_slot(b.id);
    for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * x[i];
  });
}

inline Var scale(Graph& g, Var a, double factor) {
  Tensor out = g.value(a);
  for (double& v : out.data()) v *= factor;
  return g.push(OpKind::Scale, {a.id}, std::move(out), [a, factor](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_slot(self);
    Tensor& ga = gr.grad_slot(a.id);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += factor * go[i];
  });
}

/// Sum of all elements, as a scalar.
inline Var sum(Graph& g, Var a) {
  const Tensor& x = g.value(a);
  double s = 0.0;
  for (double v : x.data()) s += v;
  return g.push(OpKind::Sum, {a.id}, Tensor::scalar(s), [a](Graph& gr, std::size_t self) {
    const double go = gr.grad_slot(self)[0];
    for (double& v : gr.grad_slot(a.id).data()) v += go;
  });
}

inline Var reshape(Graph& g, Var a, Shape shape) {
  const Tensor& x = g.value(a);
  if (shape_numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return g.push(OpKind::Reshape, {a.id}, x.reshaped(std::move(shape)), [a](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_slot(self);
    Tensor& ga = gr.grad_slot(a.id);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  });
}

inline Var flatten(Graph& g, Var a) { return reshape(g, a, Shape{g.value(a).size()}); }

/// Element `index` of the flattened input, as a scalar.
inline Var select(Graph& g, Var a, std::size_t index) {
  const Tensor& x = g.value(a);
  if (index >= x.size()) {
    throw IndexError("select: index " + std::to_string(index) + " out of range for " + shape_str(x.shape()));
  }
  return g.push(OpKind::Select, {a.id}, Tensor::scalar(x[index]), [a, index](Graph& gr, std::size_t self) {
    gr.grad_slot(a.id)[index] += gr.grad_slot(self)[0];
  });
}

/// Stacks equal-length vectors as the rows of a matrix.
inline Var stack_rows(Graph& g, const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  const std::size_t n = g.value(rows[0]).size();
  Tensor out(Shape{rows.size(), n});
  std::vector<std::size_t> ids;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& v = g.value(rows[r]);
    if (v.rank() != 1 || v.size() != n) {
      throw ShapeError("stack_rows: row " + std::to_string(r) + " has shape " + shape_str(v.shape()) +
                       ", expected [" + std::to_string(n) + "]");
    }
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + r * n);
    ids.push_back(rows[r].id);
  }
  return g.push(OpKind::StackRows, ids, std::move(out), [ids, n](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_slot(self);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      Tensor& gi = gr.grad_slot(ids[r]);
      for (std::size_t i = 0; i < n; ++i) gi[i] += go[r * n + i];
    }
  });
}

/// max(0, x); the subgradient at exactly 0 is 0.
inline Var relu(Graph& g, Var a) {
  Tensor out = g.value(a);
  for (double& v : out.data()) v = (v > 0.0 || std::isnan(v)) ? v : 0.0;
  return g.push(OpKind::Relu, {a.id}, std::move(out), [a](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_slot(self);
    const Tensor& x = gr.value_of(a.id);
    Tensor& ga = gr.grad_slot(a.id);
    for (std::size_t i = 0; i < go.size(); ++i) {
      if (x[i] > 0.0) ga[i] += go[i];
    }
  });
}

/// 3x3 cross-correlation, stride 1, zero padding 1: C_in x H x W -> C_out x H x W.
inline Var conv2d(Graph& g, Var input, Var weight, Var bias) {
  const Tensor& x = g.value(input);
  const Tensor& w = g.value(weight);
  const Tensor& b = g.value(bias);
  if (x.rank() != 3) throw ShapeError("conv2d: input must be C x H x W, got " + shape_str(x.shape()));
  if (w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3) {
    throw ShapeError("conv2d: weight must be C_out x C_in x 3 x 3, got " + shape_str(w.shape()));
  }
  if (w.dim(1) != x.dim(0)) {
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(0)) + " channels, weight expects " +
                     std::to_string(w.dim(1)));
  }
  if (b.rank() != 1 || b.dim(0) != w.dim(0)) {
    throw ShapeError("conv2d: bias must have length " + std::to_string(w.dim(0)) + ", got " + shape_str(b.shape()));
  }
  const std::size_t C_out = w.dim(0), K = w.dim(1) * 9, H = x.dim(1), W = x.dim(2), HW = H * W;
  auto cols = std::make_shared<std::vector<double>>(detail::im2col3x3(x));
  Tensor out(Shape{C_out, H, W});
  for (std::size_t o = 0; o < C_out; ++o) {
    double* dst = out.data().data() + o * HW;
    std::fill(dst, dst + HW, b[o]);
    const double* wrow = w.data().data() + o * K;
    for (std::size_t k = 0; k < K; ++k) detail::axpy(wrow[k], cols->data() + k * HW, dst, HW);
  }
  return g.push(OpKind::Conv2d, {input.id, weight.id, bias.id}, std::move(out),
                [input, weight, bias, cols, C_out, K, HW](Graph& gr, std::size_t self) {
                  const Tensor& go = gr.grad_slot(self);
                  const Tensor& w = gr.value_of(weight.id);
                  Tensor& gw = gr.grad_slot(weight.id);
                  Tensor& gb = gr.grad_slot(bias.id);
                  const bool want_input = gr.requires_grad(input.id);
                  std::vector<double> gcols(want_input ? K * HW : 0, 0.0);
                  for (std::size_t o = 0; o < C_out; ++o) {
                    const double* grow = go.data().data() + o * HW;
                    double s = 0.0;
                    for (std::size_t i = 0; i < HW; ++i) s += grow[i];
                    gb[o] += s;
                    const double* wrow = w.data().data() + o * K;
                    double* gwrow = gw.data().data() + o * K;
                    for (std::size_t k = 0; k < K; ++k) {
                      gwrow[k] += detail::dot(grow, cols->data() + k * HW, HW);
                      if (want_input) detail::axpy(wrow[k], grow, gcols.data() + k * HW, HW);
                    }
                  }
                  if (want_input) detail::col2im3x3_add(gcols, gr.grad_slot(input.id));
                });
}

/// Non-overlapping max pooling with floor semantics; ties go to the first
/// element in row-major window order.
inline Var maxpool2d(Graph& g, Var input, std::size_t ph, std::size_t pw) {
  const Tensor& x = g.value(input);
  if (x.rank() != 3) throw ShapeError("maxpool2d: input must be C x H x W, got " + shape_str(x.shape()));
  if (ph == 0 || pw == 0) throw ShapeError("maxpool2d: window must be positive");
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (ph > H || pw > W) {
    throw ShapeError("maxpool2d: window (" + std::to_string(ph) + "," + std::to_string(pw) +
                     ") larger than input " + shape_str(x.shape()));
  }
  const std::size_t Ho = H / ph, Wo = W / pw;
  Tensor out(Shape{C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        std::size_t best = (c * H + oy * ph) * W + ox * pw;
        for (std::size_t dy = 0; dy < ph; ++dy) {
          for (std::size_t dx = 0; dx < pw; ++dx) {
            const std::size_t idx = (c * H + oy * ph + dy) * W + ox * pw + dx;
            if (x[idx] > x[best] || (std::isnan(x[idx]) && !std::isnan(x[best]))) best = idx;
          }
        }
        const std::size_t o = (c * Ho + oy) * Wo + ox;
        out[o] = x[best];
        (*argmax)[o] = best;
      }
    }
  }
  return g.push(OpKind::MaxPool2d, {input.id}, std::move(out), [input, argmax](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_slot(self);
    Tensor& gi = gr.grad_slot(input.id);
    for (std::size_t o = 0; o < go.size(); ++o) gi[(*argmax)[o]] += go[o];
  });
}

/// weight * input + bias for a vector input of length N and an M x N weight.
inline Var linear(Graph& g, Var input, Var weight, Var bias) {
  const Tensor& x = g.value(input);
  const Tensor& w = g.value(weight);
  const Tensor& b = g.value(bias);
  if (x.rank() != 1) throw ShapeError("linear: input must be a vector, got " + shape_str(x.shape()));
  if (w.rank() != 2 || w.dim(1) != x.dim(0)) {
    throw ShapeError("linear: weight " + shape_str(w.shape()) + " does not accept input of length " +
                     std::to_string(x.dim(0)));
  }
  if (b.rank() != 1 || b.dim(0) != w.dim(0)) {
    throw ShapeError("linear: bias must have length " + std::to_string(w.dim(0)) + ", got " + shape_str(b.shape()));
  }
  const std::size_t M = w.dim(0), N = w.dim(1);
  Tensor out(Shape{M});
  for (std::size_t m = 0; m < M; ++m) out[m] = b[m] + detail::dot(w.data().data() + m * N, x.data().data(), N);
  return g.push(OpKind::Linear, {input.id, weight.id, bias.id}, std::move(out),
                [input, weight, bias, M, N](Graph& gr, std::size_t self) {
                  const Tensor& go = gr.grad_slot(self);
                  const Tensor& x = gr.value_of(input.id);
                  const Tensor& w = gr.value_of(weight.id);
                  Tensor& gx = gr.grad_slot(input.id);
                  Tensor& gw = gr.grad_slot(weight.id);
                  Tensor& gb = gr.grad_slot(bias.id);
                  for (std::size_t m = 0; m < M; ++m) {
                    const double gm = go[m];
                    gb[m] += gm;
                    if (gm == 0.0) continue;
                    detail::axpy(gm, x.data().data(), gw.data().data() + m * N, N);
                    detail::axpy(gm, w.data().data() + m * N, gx.data().data(), N);
                  }
                });
}

/// (m x k) * (k x n).
inline Var matmul(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0)) {
    throw ShapeError("matmul: incompatible " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
  }
  const std::size_t M = A.dim(0), K = A.dim(1), N = B.dim(1);
  Tensor out(Shape{M, N});
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      detail::axpy(A[i * K + k], B.data().data() + k * N, out.data().data() + i * N, N);
    }
  }
  return g.push(OpKind::MatMul, {a.id, b.id}, std::move(out), [a, b, M, K, N](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_slot(self);
    const Tensor& A = gr.value_of(a.id);
    const Tensor& B = gr.value_of(b.id);
    Tensor& gA = gr.grad_slot(a.id);
    Tensor& gB = gr.grad_slot(b.id);
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t k = 0; k < K; ++k) {
        gA[i * K + k] += detail::dot(go.data().data() + i * N, B.data().data() + k * N, N);
        detail::axpy(A[i * K + k], go.data().data() + i * N, gB.data().data() + k * N, N);
      }
    }
  });
}

/// (m x k) * (n x k)^T.
inline Var matmul_nt(Graph& g, Var a, Var b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(1)) {
    throw ShapeError("matmul_nt: incompatible " + shape_str(A.shape()) + " x " + shape_str(B.shape()) + "^T");
  }
  const std::size_t M = A.dim(0), K = A.dim(1), N = B.dim(0);
  Tensor out(Shape{M, N});
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      out[i * N + j] = detail::dot(A.data().data() + i * K, B.data().data() + j * K, K);
    }
  }
  return g.push(OpKind::MatMulNT, {a.id, b.id}, std::move(out), [a, b, M, K, N](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_slot(self);
    const Tensor& A = gr.value_of(a.id);
    const Tensor& B = gr.value_of(b.id);
    Tensor& gA = gr.grad_slot(a.id);
    Tensor& gB = gr.grad_slot(b.id);
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t j = 0; j < N; ++j) {
        const double gij = go[i * N + j];
        detail::axpy(gij, B.data().data() + j * K, gA.data().data() + i * K, K);
        detail::axpy(gij, A.data().data() + i * K, gB.data().data() + j * K, K);
      }
    }
  });
}

/// Row-wise softmax over the last axis, max-shifted for stability.
inline Tensor softmax_values(const Tensor& x) {
  const std::size_t K = x.rank() == 0 ? 1 : x.shape().back();
  const std::size_t rows = x.size() / K;
  Tensor out = x;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * K;
    const double m = *std::max_element(row, row + K);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      row[k] = std::exp(row[k] - m);
      z += row[k];
    }
    for (std::size_t k = 0; k < K; ++k) row[k] /= z;
  }
  return out;
}

inline Var softmax(Graph& g, Var a) {
  Tensor out = softmax_values(g.value(a));
  const std::size_t K = out.rank() == 0 ? 1 : out.shape().back();
  return g.push(OpKind::Softmax, {a.id}, std::move(out), [a, K](Graph& gr, std::size_t self) {
    const Tensor& go = gr.grad_slot(self);
    const Tensor& y = gr.value_of(self);
    Tensor& ga = gr.grad_slot(a.id);
    for (std::size_t r = 0; r < y.size() / K; ++r) {
      const double* yr = y.data().data() + r * K;
      const double* gr_ = go.data().data() + r * K;
      const double d = detail::dot(yr, gr_, K);
      for (std::size_t k = 0; k < K; ++k) ga[r * K + k] += yr[k] * (gr_[k] - d);
    }
  });
}

/// -log softmax(logits)[target].
inline Var cross_entropy_logits(Graph& g, Var logits, std::size_t target) {
  const Tensor& x = g.value(logits);
  if (x.rank() != 1) throw ShapeError("cross_entropy_logits: logits must be a vector, got " + shape_str(x.shape()));
  if (target >= x.size()) {
    throw IndexError("cross_entropy_logits: target " + std::to_string(target) + " outside [0, " +
                     std::to_string(x.size()) + ")");
  }
  const double m = *std::max_element(x.data().begin(), x.data().end());
  double z = 0.0;
  for (double v : x.data()) z += std::exp(v - m);
  const double loss = m + std::log(z) - x[target];
  return g.push(OpKind::CrossEntropy, {logits.id}, Tensor::scalar(loss), [logits, target](Graph& gr, std::size_t self) {
    const double go = gr.grad_slot(self)[0];
    const Tensor p = softmax_values(gr.value_of(logits.id));
    Tensor& gl = gr.grad_slot(logits.id);
    for (std::size_t k = 0; k < p.size(); ++k) gl[k] += go * (p[k] - (k == target ? 1.0 : 0.0));
  });
}

/// Binary cross-entropy of sigmoid(logit) against a 0/1 target, in the
/// overflow-free form max(x, 0) - x t + log(1 + exp(-|x|)).
inline Var bce_logits(Graph& g, Var logit, int target) {
  const Tensor& x = g.value(logit);
  if (x.size() != 1) throw ShapeError("bce_logits: logit must be scalar, got " + shape_str(x.shape()));
  if (target != 0 && target != 1) throw IndexError("bce_logits: target must be 0 or 1");
  const double v = x[0];
  const double t = target;
  const double loss = std::max(v, 0.0) - v * t + std::log1p(std::exp(-std::abs(v)));
  return g.push(OpKind::BceLogits, {logit.id}, Tensor::scalar(loss), [logit, t](Graph& gr, std::size_t self) {
    const double v = gr.value_of(logit.id)[0];
    const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    gr.grad_slot(logit.id)[0] += gr.grad_slot(self)[0] * (s - t);
  });
}

}  // namespace fawn

#endif  // FAWN_OPS_HPP
