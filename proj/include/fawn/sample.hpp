#ifndef FAWN_SAMPLE_HPP
#define FAWN_SAMPLE_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "fawn/errors.hpp"
#include "fawn/tensor.hpp"

namespace fawn {

/// Room discretization: 9 columns (x) by 10 rows (y) of 0.6 m squares.
inline constexpr std::size_t kGridCols = 9;
inline constexpr std::size_t kGridRows = 10;
inline constexpr std::size_t kNumCells = kGridCols * kGridRows;
inline constexpr double kCellSize = 0.6;

struct Cell {
  std::uint8_t ix = 0;
  std::uint8_t iy = 0;

  double x_m() const noexcept { return kCellSize * ix; }
  double y_m() const noexcept { return kCellSize * iy; }
  bool in_grid() const noexcept { return ix < kGridCols && iy < kGridRows; }

  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Ground truth of one snapshot: which entities are in the room and where.
struct SceneLabel {
  std::optional<Cell> person;
  std::optional<Cell> robot;

  bool empty() const noexcept { return !person && !robot; }

  void validate() const {
    if (person && !person->in_grid()) {
      throw IndexError("person cell (" + std::to_string(person->ix) + "," + std::to_string(person->iy) +
                       ") outside the 9x10 grid");
    }
    if (robot && !robot->in_grid()) {
      throw IndexError("robot cell (" + std::to_string(robot->ix) + "," + std::to_string(robot->iy) +
                       ") outside the 9x10 grid");
    }
  }

  friend bool operator==(const SceneLabel&, const SceneLabel&) = default;
};

inline const Shape kShape5g{2, 360, 4};
inline const Shape kShapeWifi{2, 52, 1};

/// One labeled observation: I/Q CSI maps of both technologies plus the label.
struct CsiSample {
  Tensor csi_5g{kShape5g};
  Tensor csi_wifi{kShapeWifi};
  SceneLabel label;

  friend bool operator==(const CsiSample&, const CsiSample&) = default;
};

}  // namespace fawn

#endif  // FAWN_SAMPLE_HPP
