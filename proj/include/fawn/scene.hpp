#ifndef FAWN_SCENE_HPP
#define FAWN_SCENE_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fawn/errors.hpp"
#include "fawn/model.hpp"
#include "fawn/rng.hpp"
#include "fawn/sample.hpp"
#include "fawn/tensor.hpp"

// Synthetic stand-in for the laboratory testbed: a 2-D room with two
// emitter/passive-receiver pairs and single-bounce scattering off the
// person and the robot.

namespace fawn {

inline constexpr double kSpeedOfLight = 2.99792458e8;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(Point a, Point b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

inline Point cell_center(Cell c) noexcept { return {c.x_m(), c.y_m()}; }

struct RoomLayout {
  Point nr_emitter{4.8, 4.8};
  Point nr_receiver{0.0, 0.6};
  Point wifi_emitter{4.8, 0.6};
  Point wifi_receiver{0.0, 5.4};

  bool is_device_cell(Cell c) const noexcept {
    const Point p = cell_center(c);
    for (Point d : {nr_emitter, nr_receiver, wifi_emitter, wifi_receiver}) {
      if (distance(p, d) < 1e-9) return true;
    }
    return false;
  }

  /// Cells an entity may occupy: every grid cell except those whose center
  /// coincides with a device (the scatter path length would be zero there).
  std::vector<Cell> occupiable_cells() const {
    std::vector<Cell> cells;
    for (std::uint8_t iy = 0; iy < kGridRows; ++iy) {
      for (std::uint8_t ix = 0; ix < kGridCols; ++ix) {
        const Cell c{ix, iy};
        if (!is_device_cell(c)) cells.push_back(c);
      }
    }
    return cells;
  }
};

struct ScattererModel {
  double rho_person = 0.8;
  double rho_robot = 1.5;
  double noise_sigma = 0.01;     // per I/Q component, relative to |LoS|
  double torus_radius = 1.2;     // 5G gain ramps linearly to 1 at this distance from the dot
  double max_phase_drift = 0.05; // rad per symbol index
};

struct LinkSpec {
  Technology tech = Technology::Nr5g;
  double center_hz = 0.0;
  std::size_t subcarriers = 0;
  double spacing_hz = 0.0;
  std::size_t symbols = 0;

  static LinkSpec nr5g() { return {Technology::Nr5g, 3.5e9, 360, 30e3, 4}; }
  static LinkSpec wifi() { return {Technology::Wifi, 5.18e9, 52, 312.5e3, 1}; }

  /// Frequency of subcarrier slot k. 5G slots are centered on index 180;
  /// Wi-Fi slots map to offsets -26..-1, 1..26 (DC skipped).
  double frequency(std::size_t k) const {
    if (k >= subcarriers) {
      throw IndexError("subcarrier " + std::to_string(k) + " outside [0, " + std::to_string(subcarriers) + ")");
    }
    const auto ik = static_cast<long>(k);
    long offset = 0;
    if (tech == Technology::Nr5g) {
      offset = ik - static_cast<long>(subcarriers / 2);
    } else {
      const long half = static_cast<long>(subcarriers / 2);
      offset = ik < half ? ik - half : ik - half + 1;
    }
    return center_hz + static_cast<double>(offset) * spacing_hz;
  }

  Shape tensor_shape() const { return {2, subcarriers, symbols}; }
};

struct Scene {
  std::optional<Cell> person;
  std::optional<Cell> robot;

  SceneLabel label() const { return {person, robot}; }
  static Scene from_label(const SceneLabel& l) { return {l.person, l.robot}; }

  friend bool operator==(const Scene&, const Scene&) = default;
};

/// Each entity present with probability 0.75, independently, on a uniformly
/// drawn occupiable cell; the robot is re-drawn while it shares the person's cell.
inline Scene sample_scene(Rng& rng, const RoomLayout& layout = {}) {
  const std::vector<Cell> cells = layout.occupiable_cells();
  Scene s;
  if (rng.bernoulli(0.75)) s.person = cells[rng.below(cells.size())];
  if (rng.bernoulli(0.75)) {
    Cell c = cells[rng.below(cells.size())];
    while (s.person && c == *s.person) c = cells[rng.below(cells.size())];
    s.robot = c;
  }
  return s;
}

namespace detail {

struct LinkGeometry {
  Point emitter;
  Point receiver;
};

inline LinkGeometry link_geometry(const LinkSpec& link, const RoomLayout& layout) {
  return link.tech == Technology::Nr5g ? LinkGeometry{layout.nr_emitter, layout.nr_receiver}
                                       : LinkGeometry{layout.wifi_emitter, layout.wifi_receiver};
}

inline std::complex<double> propagate(double freq, double path_m) {
  const double phase = -2.0 * std::numbers::pi * freq * path_m / kSpeedOfLight;
  return {std::cos(phase), std::sin(phase)};
}

}  // namespace detail

/// Emitter gain towards a scatterer. The 5G dot radiates a torus with a null
/// straight below it; Wi-Fi is isotropic in the plane.
inline double emitter_gain(const LinkSpec& link, const RoomLayout& layout, const ScattererModel& model, Point s) {
  if (link.tech != Technology::Nr5g) return 1.0;
  return std::min(distance(layout.nr_emitter, s) / model.torus_radius, 1.0);
}

/// Scatter term of one entity on subcarrier k (zero-free by construction
/// because device cells are never occupied).
inline std::complex<double> scatter_term(Cell cell, double rho, const LinkSpec& link, const RoomLayout& layout,
                                         const ScattererModel& model, std::size_t k) {
  const auto geo = detail::link_geometry(link, layout);
  const Point s = cell_center(cell);
  const double d_es = distance(geo.emitter, s);
  const double d_sr = distance(s, geo.receiver);
  if (d_es <= 0.0 || d_sr <= 0.0) {
    throw ContractError("scatterer at cell (" + std::to_string(cell.ix) + "," + std::to_string(cell.iy) +
                        ") coincides with a device");
  }
  const double amp = rho * emitter_gain(link, layout, model, s) / (d_es * d_sr);
  return amp * detail::propagate(link.frequency(k), d_es + d_sr);
}

/// Line of sight plus one bounce off every present entity.
inline std::complex<double> channel_response(const Scene& scene, const LinkSpec& link, const RoomLayout& layout,
                                             const ScattererModel& model, std::size_t k) {
  const auto geo = detail::link_geometry(link, layout);
  const double d_er = distance(geo.emitter, geo.receiver);
  std::complex<double> h = detail::propagate(link.frequency(k), d_er) / d_er;
  if (scene.person) h += scatter_term(*scene.person, model.rho_person, link, layout, model, k);
  if (scene.robot) h += scatter_term(*scene.robot, model.rho_robot, link, layout, model, k);
  return h;
}

/// I/Q tensor 2 x K x S of one link, normalized so the line of sight has unit
/// magnitude. Draws the symbol phase drift first, then the noise in
/// (symbol, subcarrier, I then Q) order.
inline Tensor synth_csi_link(const Scene& scene, const LinkSpec& link, const RoomLayout& layout,
                             const ScattererModel& model, Rng& rng) {
  const auto geo = detail::link_geometry(link, layout);
  const double d_er = distance(geo.emitter, geo.receiver);
  const double noise_sd = model.noise_sigma / d_er;
  const double drift = rng.uniform(-model.max_phase_drift, model.max_phase_drift);
  const std::size_t K = link.subcarriers, S = link.symbols;

  std::vector<std::complex<double>> h(K);
  for (std::size_t k = 0; k < K; ++k) h[k] = channel_response(scene, link, layout, model, k);

  Tensor out(link.tensor_shape());
  for (std::size_t m = 0; m < S; ++m) {
    const std::complex<double> rot = std::polar(1.0, static_cast<double>(m) * drift);
    for (std::size_t k = 0; k < K; ++k) {
      const double n_re = noise_sd * rng.normal();
      const double n_im = noise_sd * rng.normal();
      const std::complex<double> v = (h[k] * rot + std::complex<double>(n_re, n_im)) * d_er;
      out[(0 * K + k) * S + m] = v.real();
      out[(1 * K + k) * S + m] = v.imag();
    }
  }
  return out;
}

inline CsiSample synth_sample(const Scene& scene, const RoomLayout& layout, const ScattererModel& model, Rng& rng) {
  CsiSample s;
  s.csi_5g = synth_csi_link(scene, LinkSpec::nr5g(), layout, model, rng);
  s.csi_wifi = synth_csi_link(scene, LinkSpec::wifi(), layout, model, rng);
  s.label = scene.label();
  return s;
}

/// Sample i is drawn from its own child stream child_seed(seed, i), so the
/// result does not depend on generation order or thread count.
inline CsiSample generate_sample(std::uint64_t seed, std::size_t index, const RoomLayout& layout,
                                 const ScattererModel& model) {
  Rng rng(child_seed(seed, index));
  const Scene scene = sample_scene(rng, layout);
  return synth_sample(scene, layout, model, rng);
}

inline std::vector<CsiSample> generate_dataset(std::size_t n, std::uint64_t seed, const RoomLayout& layout = {},
                                               const ScattererModel& model = {}, unsigned threads = 1) {
  if (n == 0) throw ContractError("generate_dataset: n must be at least 1");
  std::vector<CsiSample> out(n);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = generate_sample(seed, i, layout, model);
    return out;
  }
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += threads) out[i] = generate_sample(seed, i, layout, model);
      });
    }
  }
  return out;
}

}  // namespace fawn

#endif  // FAWN_SCENE_HPP
