#ifndef FAWN_MODEL_HPP
#define FAWN_MODEL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fawn/errors.hpp"
#include "fawn/graph.hpp"
#include "fawn/ops.hpp"
#include "fawn/rng.hpp"
#include "fawn/sample.hpp"
#include "fawn/tensor.hpp"

namespace fawn {

inline constexpr std::size_t kEmbedDim = 128;
inline constexpr std::size_t kFusedDim = 2 * kEmbedDim;

/// Geometry of one technology's encoder: conv(3x3) -> relu -> pool, twice,
/// then flatten and a linear projection to the embedding.
struct EncoderConfig {
  std::size_t channels = 2;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t conv1_filters = 16;
  std::size_t conv2_filters = 32;
  std::pair<std::size_t, std::size_t> pool1{2, 2};
  std::pair<std::size_t, std::size_t> pool2{2, 2};
  std::size_t embed_dim = kEmbedDim;

  static EncoderConfig nr5g() { return {2, 360, 4, 16, 32, {2, 2}, {2, 2}, kEmbedDim}; }
  // The 52x1 Wi-Fi map cannot pool along its width.
  static EncoderConfig wifi() { return {2, 52, 1, 16, 32, {2, 1}, {2, 1}, kEmbedDim}; }

  Shape input_shape() const { return {channels, height, width}; }

  /// Expected output shape of every stage, input first and embedding last.
  std::vector<Shape> stage_shapes() const {
    const std::size_t h1 = height / pool1.first, w1 = width / pool1.second;
    const std::size_t h2 = h1 / pool2.first, w2 = w1 / pool2.second;
    return {
        input_shape(),
        {conv1_filters, height, width},
        {conv1_filters, h1, w1},
        {conv2_filters, h1, w1},
        {conv2_filters, h2, w2},
        {conv2_filters * h2 * w2},
        {embed_dim},
    };
  }

  std::size_t flatten_length() const { return stage_shapes()[5][0]; }
};

enum class Technology { Nr5g, Wifi };

namespace detail {

struct ParamSpec {
  std::string_view name;
  Shape shape;
  std::size_t fan_in;  // 0 marks a bias
};

inline std::vector<ParamSpec> encoder_specs(std::string_view prefix_tag, const EncoderConfig& cfg) {
  const bool g5 = prefix_tag == "enc5g";
  const std::size_t fc_in = cfg.flatten_length();
  auto nm = [g5](std::string_view five, std::string_view wifi) { return g5 ? five : wifi; };
  return {
      {nm("enc5g.conv1.w", "encwifi.conv1.w"), {cfg.conv1_filters, cfg.channels, 3, 3}, cfg.channels * 9},
      {nm("enc5g.conv1.b", "encwifi.conv1.b"), {cfg.conv1_filters}, 0},
      {nm("enc5g.conv2.w", "encwifi.conv2.w"), {cfg.conv2_filters, cfg.conv1_filters, 3, 3}, cfg.conv1_filters * 9},
      {nm("enc5g.conv2.b", "encwifi.conv2.b"), {cfg.conv2_filters}, 0},
      {nm("enc5g.fc.w", "encwifi.fc.w"), {cfg.embed_dim, fc_in}, fc_in},
      {nm("enc5g.fc.b", "encwifi.fc.b"), {cfg.embed_dim}, 0},
  };
}

}  // namespace detail

/// Named parameter tensors of the whole network, in canonical order.
///
/// The order below is normative: initialization draws and the model file
/// layout both follow it.
///
///   enc5g.{conv1.w, conv1.b, conv2.w, conv2.b, fc.w, fc.b}
///   encwifi.{conv1.w, conv1.b, conv2.w, conv2.b, fc.w, fc.b}
///   fusion.{Wq, Wk, Wv}
///   heads.{presence, px, py, rx, ry}.{w, b}
class FawnParams {
 public:
  enum Index : std::size_t {
    k5gConv1W, k5gConv1B, k5gConv2W, k5gConv2B, k5gFcW, k5gFcB,
    kWifiConv1W, kWifiConv1B, kWifiConv2W, kWifiConv2B, kWifiFcW, kWifiFcB,
    kWq, kWk, kWv,
    kPresenceW, kPresenceB, kPxW, kPxB, kPyW, kPyB, kRxW, kRxB, kRyW, kRyB,
    kCount
  };

  static const std::vector<detail::ParamSpec>& specs() {
    static const std::vector<detail::ParamSpec> table = [] {
      std::vector<detail::ParamSpec> t = detail::encoder_specs("enc5g", EncoderConfig::nr5g());
      auto wifi = detail::encoder_specs("encwifi", EncoderConfig::wifi());
      t.insert(t.end(), wifi.begin(), wifi.end());
      t.push_back({"fusion.Wq", {kEmbedDim, kEmbedDim}, kEmbedDim});
      t.push_back({"fusion.Wk", {kEmbedDim, kEmbedDim}, kEmbedDim});
      t.push_back({"fusion.Wv", {kEmbedDim, kEmbedDim}, kEmbedDim});
      struct Head {
        std::string_view w, b;
        std::size_t out;
      };
      const Head heads[] = {{"heads.presence.w", "heads.presence.b", 2},
                            {"heads.px.w", "heads.px.b", kGridCols},
                            {"heads.py.w", "heads.py.b", kGridRows},
                            {"heads.rx.w", "heads.rx.b", kGridCols},
                            {"heads.ry.w", "heads.ry.b", kGridRows}};
      for (const Head& h : heads) {
        t.push_back({h.w, {h.out, kFusedDim}, kFusedDim});
        t.push_back({h.b, {h.out}, 0});
      }
      return t;
    }();
    return table;
  }

  /// All-zero parameters of the documented architecture.
  FawnParams() {
    for (const auto& s : specs()) tensors_.emplace_back(s.shape, 0.0);
  }

  static std::size_t index_of(std::string_view name) {
    const auto& t = specs();
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i].name == name) return i;
    }
    throw IndexError("unknown parameter name '" + std::string(name) + "'");
  }

  std::size_t size() const noexcept { return tensors_.size(); }
  std::string_view name(std::size_t i) const { return specs().at(i).name; }

  Tensor& operator[](std::size_t i) { return tensors_.at(i); }
  const Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
  Tensor& at(std::string_view name) { return tensors_[index_of(name)]; }
  const Tensor& at(std::string_view name) const { return tensors_[index_of(name)]; }

  std::span<Tensor> tensors() noexcept { return tensors_; }
  std::span<const Tensor> tensors() const noexcept { return tensors_; }

  bool all_finite() const {
    return std::all_of(tensors_.begin(), tensors_.end(), [](const Tensor& t) { return t.all_finite(); });
  }

  friend bool operator==(const FawnParams&, const FawnParams&) = default;

 private:
  std::vector<Tensor> tensors_;
};

/// Weights uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero, drawn
/// in canonical parameter order.
inline FawnParams init_params(Rng& rng) {
  FawnParams p;
  const auto& specs = FawnParams::specs();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].fan_in == 0) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(specs[i].fan_in));
    for (double& v : p[i].data()) v = rng.uniform(-bound, bound);
  }
  return p;
}

/// Graph handles for every parameter, indexed like FawnParams.
using ParamVars = std::vector<Var>;

inline ParamVars bind_params(Graph& g, const FawnParams& params) {
  ParamVars vars;
  vars.reserve(params.size());
  for (const Tensor& t : params.tensors()) vars.push_back(g.leaf(t));
  return vars;
}

/// Per-head logits of one forward pass.
struct HeadVars {
  Var presence, px, py, rx, ry;
};

/// Decoded network output. Decisions are pure functions of the logits.
struct SceneEstimate {
  std::array<double, 2> presence{};  // person, robot
  std::vector<double> px, py, rx, ry;

  bool person_present() const noexcept { return sigmoid(presence[0]) > 0.5; }
  bool robot_present() const noexcept { return sigmoid(presence[1]) > 0.5; }
  Cell person_cell() const { return {argmax(px), argmax(py)}; }
  Cell robot_cell() const { return {argmax(rx), argmax(ry)}; }

  /// Hard decisions as a label: cells are reported only for detected entities.
  SceneLabel decisions() const {
    SceneLabel l;
    if (person_present()) l.person = person_cell();
    if (robot_present()) l.robot = robot_cell();
    return l;
  }

  static double sigmoid(double x) noexcept {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }

  /// First index of the maximum.
  static std::uint8_t argmax(const std::vector<double>& v) {
    return static_cast<std::uint8_t>(std::max_element(v.begin(), v.end()) - v.begin());
  }

  friend bool operator==(const SceneEstimate&, const SceneEstimate&) = default;
};

/// Runs one encoder. When `trace` is given, it receives the shape of every
/// stage (input, conv1, pool1, conv2, pool2, flatten, embedding).
inline Var encoder_forward(Graph& g, Var x, const EncoderConfig& cfg, std::span<const Var> p,
                           std::vector<Shape>* trace = nullptr) {
  require_shape(g.value(x), cfg.input_shape(), "encoder_forward input");
  if (p.size() != 6) throw ShapeError("encoder_forward: expected 6 parameter handles");
  const Var c1 = relu(g, conv2d(g, x, p[0], p[1]));
  const Var s1 = maxpool2d(g, c1, cfg.pool1.first, cfg.pool1.second);
  const Var c2 = relu(g, conv2d(g, s1, p[2], p[3]));
  const Var s2 = maxpool2d(g, c2, cfg.pool2.first, cfg.pool2.second);
  const Var flat = flatten(g, s2);
  const Var emb = linear(g, flat, p[4], p[5]);
  if (trace) {
    *trace = {g.value(x).shape(),  g.value(c1).shape(),   g.value(s1).shape(), g.value(c2).shape(),
              g.value(s2).shape(), g.value(flat).shape(), g.value(emb).shape()};
  }
  return emb;
}

inline std::span<const Var> encoder_vars(const ParamVars& vars, Technology tech) {
  const std::size_t off = tech == Technology::Nr5g ? FawnParams::k5gConv1W : FawnParams::kWifiConv1W;
  return std::span<const Var>(vars).subspan(off, 6);
}

inline const EncoderConfig& encoder_config(Technology tech) {
  static const EncoderConfig g5 = EncoderConfig::nr5g();
  static const EncoderConfig wf = EncoderConfig::wifi();
  return tech == Technology::Nr5g ? g5 : wf;
}

struct FusionVars {
  Var fused;
  Var attention;  // 2x2 row-stochastic matrix
};

/// Single-head cross-attention over the two technology tokens with a
/// residual update. X stacks (e5g, ewifi) as rows; the output is
/// flatten(X + softmax(Q K^T / sqrt(D)) V).
inline FusionVars fuse_attention(Graph& g, Var e5g, Var ewifi, Var wq, Var wk, Var wv) {
  const Tensor& a = g.value(e5g);
  const Tensor& b = g.value(ewifi);
  if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size()) {
    throw ShapeError("fuse_attention: embeddings must be equal-length vectors, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  const double dim = static_cast<double>(a.size());
  const Var tokens = stack_rows(g, {e5g, ewifi});
  const Var q = matmul_nt(g, tokens, wq);
  const Var k = matmul_nt(g, tokens, wk);
  const Var v = matmul_nt(g, tokens, wv);
  const Var attn = softmax(g, scale(g, matmul_nt(g, q, k), 1.0 / std::sqrt(dim)));
  const Var updated = add(g, tokens, matmul(g, attn, v));
  return {flatten(g, updated), attn};
}

inline HeadVars decoder_forward(Graph& g, Var fused, const ParamVars& p) {
  require_shape(g.value(fused), Shape{kFusedDim}, "decoder_forward input");
  using P = FawnParams;
  return {
      linear(g, fused, p[P::kPresenceW], p[P::kPresenceB]),
      linear(g, fused, p[P::kPxW], p[P::kPxB]),
      linear(g, fused, p[P::kPyW], p[P::kPyB]),
      linear(g, fused, p[P::kRxW], p[P::kRxB]),
      linear(g, fused, p[P::kRyW], p[P::kRyB]),
  };
}

inline HeadVars fawn_forward(Graph& g, Var x5g, Var xwifi, const ParamVars& p, Var* attention = nullptr) {
  const Var e5g = encoder_forward(g, x5g, EncoderConfig::nr5g(), encoder_vars(p, Technology::Nr5g));
  const Var ewifi = encoder_forward(g, xwifi, EncoderConfig::wifi(), encoder_vars(p, Technology::Wifi));
  const FusionVars fusion = fuse_attention(g, e5g, ewifi, p[FawnParams::kWq], p[FawnParams::kWk], p[FawnParams::kWv]);
  if (attention) *attention = fusion.attention;
  return decoder_forward(g, fusion.fused, p);
}

inline SceneEstimate read_estimate(const Graph& g, const HeadVars& h) {
  auto vec = [&g](Var v) {
    const auto d = g.value(v).data();
    return std::vector<double>(d.begin(), d.end());
  };
  SceneEstimate est;
  est.presence = {g.value(h.presence)[0], g.value(h.presence)[1]};
  est.px = vec(h.px);
  est.py = vec(h.py);
  est.rx = vec(h.rx);
  est.ry = vec(h.ry);
  return est;
}

/// Inference on one sample.
inline SceneEstimate fawn_forward(const CsiSample& sample, const FawnParams& params) {
  Graph g;
  const ParamVars p = bind_params(g, params);
  const Var x5g = g.constant(sample.csi_5g);
  const Var xwifi = g.constant(sample.csi_wifi);
  return read_estimate(g, fawn_forward(g, x5g, xwifi, p));
}

/// Presence BCE for both entities plus cell cross-entropies for the
/// entities that are actually present.
inline Var fawn_loss(Graph& g, const HeadVars& h, const SceneLabel& label) {
  label.validate();
  Var loss = add(g, bce_logits(g, select(g, h.presence, 0), label.person ? 1 : 0),
                 bce_logits(g, select(g, h.presence, 1), label.robot ? 1 : 0));
  if (label.person) {
    loss = add(g, loss, cross_entropy_logits(g, h.px, label.person->ix));
    loss = add(g, loss, cross_entropy_logits(g, h.py, label.person->iy));
  }
  if (label.robot) {
    loss = add(g, loss, cross_entropy_logits(g, h.rx, label.robot->ix));
    loss = add(g, loss, cross_entropy_logits(g, h.ry, label.robot->iy));
  }
  return loss;
}

inline double fawn_loss(const SceneEstimate& est, const SceneLabel& label) {
  if (est.px.size() != kGridCols || est.py.size() != kGridRows || est.rx.size() != kGridCols ||
      est.ry.size() != kGridRows) {
    throw ShapeError("fawn_loss: estimate head sizes must be (2, 9, 10, 9, 10)");
  }
  Graph g;
  auto leaf = [&g](const std::vector<double>& v) { return g.leaf(Tensor(Shape{v.size()}, v)); };
  const HeadVars h{g.leaf(Tensor(Shape{2}, std::vector<double>{est.presence[0], est.presence[1]})), leaf(est.px),
                   leaf(est.py), leaf(est.rx), leaf(est.ry)};
  return g.value(fawn_loss(g, h, label)).item();
}

}  // namespace fawn

#endif  // FAWN_MODEL_HPP
