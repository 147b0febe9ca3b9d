#ifndef FAWN_TRAIN_HPP
#define FAWN_TRAIN_HPP

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fawn/adam.hpp"
#include "fawn/errors.hpp"
#include "fawn/graph.hpp"
#include "fawn/model.hpp"
#include "fawn/ops.hpp"
#include "fawn/rng.hpp"
#include "fawn/sample.hpp"

namespace fawn {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  AdamConfig adam{};
  std::uint64_t seed = 42;
  std::array<double, 3> split{0.8, 0.1, 0.1};  // train, validation, test

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs", "must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size", "must be at least 1");
    for (double f : split) {
      if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split", "fractions must lie in [0, 1]");
    }
    if (std::abs(split[0] + split[1] + split[2] - 1.0) > 1e-9) {
      throw ConfigError("split", "fractions must sum to 1");
    }
    if (!(adam.lr >= 0.0) || !std::isfinite(adam.lr)) throw ConfigError("lr", "must be finite and non-negative");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("beta1", "must lie in [0, 1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("beta2", "must lie in [0, 1)");
    if (!(adam.eps > 0.0)) throw ConfigError("eps", "must be positive");
  }
};

// --------------------------------------------------------------------------
// Dataset split

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Seeded Fisher-Yates shuffle, then contiguous train/val/test slices.
/// Validation and test sizes are floored; the remainder goes to training.
inline SplitIndices split_indices(std::size_t n, const std::array<double, 3>& fractions, std::uint64_t seed) {
  if (n == 0) throw ContractError("split_dataset: empty input");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ContractError("split_dataset: fractions must sum to 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fractions[1] + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fractions[2] + 1e-9));
  const std::size_t n_train = n - n_val - n_test;
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  return s;
}

struct DatasetSplit {
  std::vector<CsiSample> train, val, test;
};

inline DatasetSplit split_dataset(std::span<const CsiSample> samples, const std::array<double, 3>& fractions,
                                  std::uint64_t seed) {
  const SplitIndices idx = split_indices(samples.size(), fractions, seed);
  auto gather = [&samples](const std::vector<std::size_t>& ids) {
    std::vector<CsiSample> out;
    out.reserve(ids.size());
    for (std::size_t i : ids) out.push_back(samples[i]);
    return out;
  };
  return {gather(idx.train), gather(idx.val), gather(idx.test)};
}

// --------------------------------------------------------------------------
// Training

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;  // empty when trained without a validation set
  std::size_t best_epoch = 0;    // 0-based
  double best_val_loss = 0.0;
};

struct TrainResult {
  FawnParams params;
  TrainHistory history;
};

/// Mean fawn_loss over a set, without building gradients.
inline double mean_loss(const FawnParams& params, std::span<const CsiSample> samples) {
  if (samples.empty()) throw ContractError("mean_loss: empty sample set");
  double total = 0.0;
  for (const CsiSample& s : samples) total += fawn_loss(fawn_forward(s, params), s.label);
  return total / static_cast<double>(samples.size());
}

/// Loss and parameter gradients averaged over one mini-batch.
struct BatchGradient {
  double loss = 0.0;
  std::vector<Tensor> grads;
};

inline BatchGradient batch_gradient(const FawnParams& params, std::span<const CsiSample> samples,
                                    std::span<const std::size_t> batch) {
  Graph g;
  const ParamVars p = bind_params(g, params);
  std::optional<Var> total;
  for (std::size_t i : batch) {
    const CsiSample& s = samples[i];
    const HeadVars h = fawn_forward(g, g.constant(s.csi_5g), g.constant(s.csi_wifi), p);
    const Var l = fawn_loss(g, h, s.label);
    total = total ? add(g, *total, l) : l;
  }
  const Var mean = scale(g, *total, 1.0 / static_cast<double>(batch.size()));
  g.backward(mean);
  BatchGradient out;
  out.loss = g.value(mean).item();
  out.grads.reserve(p.size());
  for (Var v : p) out.grads.push_back(g.grad(v));
  return out;
}

using EpochCallback = std::function<void(std::size_t epoch, double train_loss, std::optional<double> val_loss)>;

/// Training loop starting from the given parameters.
inline TrainResult train_from(FawnParams params, std::span<const CsiSample> train_set,
                              std::span<const CsiSample> val, const TrainConfig& cfg, Rng& rng,
                              const EpochCallback& on_epoch = nullptr) {
  if (train_set.empty()) throw ContractError("train: empty training set");
  cfg.validate();
  AdamState state = AdamState::for_params(params.tensors());
  TrainResult result{params, {}};
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      BatchGradient bg = batch_gradient(params, train_set, batch);
      if (!std::isfinite(bg.loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      loss_sum += bg.loss * static_cast<double>(batch.size());
      adam_step(params.tensors(), bg.grads, state, cfg.adam);
    }
    const double train_loss = loss_sum / static_cast<double>(order.size());
    result.history.train_loss.push_back(train_loss);

    std::optional<double> val_loss;
    if (!val.empty()) {
      val_loss = mean_loss(params, val);
      if (!std::isfinite(*val_loss)) {
        throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
      }
      result.history.val_loss.push_back(*val_loss);
      if (epoch == 0 || *val_loss < result.history.best_val_loss) {
        result.history.best_val_loss = *val_loss;
        result.history.best_epoch = epoch;
        result.params = params;
      }
    } else {
      result.history.best_epoch = epoch;
      result.params = params;
    }
    if (on_epoch) on_epoch(epoch, train_loss, val_loss);
  }
  return result;
}

/// Mini-batch Adam. Parameters are initialized from `rng`, which also drives
/// the per-epoch shuffles. Returns the parameters of the epoch with the lowest
/// validation loss (the final parameters when `val` is empty).
inline TrainResult train(std::span<const CsiSample> train_set, std::span<const CsiSample> val,
                         const TrainConfig& cfg, Rng& rng, const EpochCallback& on_epoch = nullptr) {
  if (train_set.empty()) throw ContractError("train: empty training set");
  cfg.validate();
  FawnParams params = init_params(rng);
  return train_from(params, train_set, val, cfg, rng, on_epoch);
}

// --------------------------------------------------------------------------
// Metrics

struct BinaryCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  void add(bool predicted, bool truth) noexcept {
    if (predicted && truth) ++tp;
    else if (predicted) ++fp;
    else if (truth) ++fn;
    else ++tn;
  }

  /// 2TP / (2TP + FP + FN), defined as 0 when the denominator is 0.
  double f1() const noexcept {
    const std::size_t den = 2 * tp + fp + fn;
    return den == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(den);
  }

  bool f1_undefined() const noexcept { return 2 * tp + fp + fn == 0; }

  friend bool operator==(const BinaryCounts&, const BinaryCounts&) = default;
};

struct ClassificationMetrics {
  double accuracy = 0.0;  // both presence bits correct
  double f1_macro = 0.0;
  std::array<double, 2> per_entity_f1{};  // person, robot
  std::array<BinaryCounts, 2> counts{};
  bool f1_zero_denominator = false;
};

/// Presence metrics from predicted vs true labels (only presence is used).
inline ClassificationMetrics classification_metrics(std::span<const SceneLabel> predicted,
                                                    std::span<const SceneLabel> truth) {
  if (predicted.size() != truth.size()) throw ContractError("classification_metrics: length mismatch");
  if (truth.empty()) throw ContractError("classification_metrics: empty test set");
  ClassificationMetrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool pp = predicted[i].person.has_value(), pr = predicted[i].robot.has_value();
    const bool tp = truth[i].person.has_value(), tr = truth[i].robot.has_value();
    m.counts[0].add(pp, tp);
    m.counts[1].add(pr, tr);
    if (pp == tp && pr == tr) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  m.per_entity_f1 = {m.counts[0].f1(), m.counts[1].f1()};
  m.f1_macro = 0.5 * (m.per_entity_f1[0] + m.per_entity_f1[1]);
  m.f1_zero_denominator = m.counts[0].f1_undefined() || m.counts[1].f1_undefined();
  return m;
}

inline ClassificationMetrics evaluate_classification(const FawnParams& params, std::span<const CsiSample> test) {
  std::vector<SceneLabel> predicted, truth;
  for (const CsiSample& s : test) {
    predicted.push_back(fawn_forward(s, params).decisions());
    truth.push_back(s.label);
  }
  return classification_metrics(predicted, truth);
}

enum class Entity { Person, Robot };

struct EntityError {
  Entity entity = Entity::Person;
  Cell truth;
  Cell predicted;
  double error_m = 0.0;
};

inline double cell_distance(Cell a, Cell b) {
  const double dx = static_cast<double>(a.ix) - static_cast<double>(b.ix);
  const double dy = static_cast<double>(a.iy) - static_cast<double>(b.iy);
  return kCellSize * std::sqrt(dx * dx + dy * dy);
}

/// One entry per truly-present entity, comparing the argmax cell with the
/// true cell whatever the presence decision was.
inline std::vector<EntityError> entity_errors(const SceneEstimate& est, const SceneLabel& label) {
  std::vector<EntityError> out;
  if (label.person) {
    const Cell c = est.person_cell();
    out.push_back({Entity::Person, *label.person, c, cell_distance(c, *label.person)});
  }
  if (label.robot) {
    const Cell c = est.robot_cell();
    out.push_back({Entity::Robot, *label.robot, c, cell_distance(c, *label.robot)});
  }
  return out;
}

inline std::vector<double> position_error(const SceneEstimate& est, const SceneLabel& label) {
  std::vector<double> out;
  for (const EntityError& e : entity_errors(est, label)) out.push_back(e.error_m);
  return out;
}

struct EcdfPoint {
  double error = 0.0;
  double fraction = 0.0;

  friend bool operator==(const EcdfPoint&, const EcdfPoint&) = default;
};

/// Sorted (error, cumulative fraction) pairs; equal errors keep only the
/// highest fraction.
inline std::vector<EcdfPoint> ecdf(std::vector<double> errors) {
  std::sort(errors.begin(), errors.end());
  std::vector<EcdfPoint> curve;
  const double n = static_cast<double>(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const double frac = static_cast<double>(i + 1) / n;
    if (!curve.empty() && curve.back().error == errors[i]) {
      curve.back().fraction = frac;
    } else {
      curve.push_back({errors[i], frac});
    }
  }
  return curve;
}

/// Fraction of errors <= x according to the curve.
inline double ecdf_at(std::span<const EcdfPoint> curve, double x) {
  double f = 0.0;
  for (const EcdfPoint& p : curve) {
    if (p.error <= x + 1e-12) f = p.fraction;
  }
  return f;
}

/// Rows are y (0..9), columns x (0..8); empty cells have no value.
using Heatmap = std::array<std::array<std::optional<double>, kGridCols>, kGridRows>;

inline Heatmap error_heatmap(std::span<const std::pair<Cell, double>> observations) {
  std::array<std::array<double, kGridCols>, kGridRows> sums{};
  std::array<std::array<std::size_t, kGridCols>, kGridRows> counts{};
  for (const auto& [cell, err] : observations) {
    if (!cell.in_grid()) throw IndexError("error_heatmap: cell outside grid");
    sums[cell.iy][cell.ix] += err;
    ++counts[cell.iy][cell.ix];
  }
  Heatmap h{};
  for (std::size_t y = 0; y < kGridRows; ++y) {
    for (std::size_t x = 0; x < kGridCols; ++x) {
      if (counts[y][x] > 0) h[y][x] = sums[y][x] / static_cast<double>(counts[y][x]);
    }
  }
  return h;
}

struct Timing {
  double mean_us = 0.0;
  double stdev_us = 0.0;

  friend bool operator==(const Timing&, const Timing&) = default;
};

/// Wall-clock time of single-sample inference after 3 discarded warm-up runs.
inline Timing measure_inference_time(const FawnParams& params, const CsiSample& sample, std::size_t repetitions) {
  if (repetitions < 10) throw ContractError("measure_inference_time: need at least 10 repetitions");
  for (int i = 0; i < 3; ++i) (void)fawn_forward(sample, params);
  std::vector<double> us;
  us.reserve(repetitions);
  for (std::size_t i = 0; i < repetitions; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const SceneEstimate est = fawn_forward(sample, params);
    const auto t1 = std::chrono::steady_clock::now();
    (void)est;
    us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
  }
  const double n = static_cast<double>(us.size());
  const double mean = std::accumulate(us.begin(), us.end(), 0.0) / n;
  double var = 0.0;
  for (double v : us) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / (n - 1.0))};
}

// --------------------------------------------------------------------------
// Full report

struct EvalReport {
  double accuracy = 0.0;
  double f1_macro = 0.0;
  std::array<double, 2> per_entity_f1{};
  bool f1_zero_denominator = false;
  std::vector<double> errors;  // sorted, meters
  std::vector<EcdfPoint> ecdf;
  bool ecdf_empty = false;
  Heatmap heatmap{};
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::optional<Timing> timing;
};

/// Metrics of `params` on `test`. Pure: re-evaluation is bit-identical.
inline EvalReport evaluate(const FawnParams& params, std::span<const CsiSample> test) {
  if (test.empty()) throw ContractError("evaluate: empty test set");
  std::vector<SceneLabel> predicted, truth;
  std::vector<std::pair<Cell, double>> observations;
  EvalReport r;
  for (const CsiSample& s : test) {
    const SceneEstimate est = fawn_forward(s, params);
    predicted.push_back(est.decisions());
    truth.push_back(s.label);
    for (const EntityError& e : entity_errors(est, s.label)) {
      r.errors.push_back(e.error_m);
      observations.emplace_back(e.truth, e.error_m);
    }
  }
  const ClassificationMetrics cm = classification_metrics(predicted, truth);
  r.accuracy = cm.accuracy;
  r.f1_macro = cm.f1_macro;
  r.per_entity_f1 = cm.per_entity_f1;
  r.f1_zero_denominator = cm.f1_zero_denominator;
  std::sort(r.errors.begin(), r.errors.end());
  r.ecdf = ecdf(r.errors);
  r.ecdf_empty = r.ecdf.empty();
  r.heatmap = error_heatmap(observations);
  return r;
}

}  // namespace fawn

#endif  // FAWN_TRAIN_HPP
