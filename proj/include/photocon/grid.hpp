#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace photocon {

/// Raised when an operation's precondition on its inputs does not hold.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for loss configurations that violate a mutual-exclusion rule.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Row-major H x W field. Pixel (i, j) is (row, col); u runs along columns.
template <typename T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int h, int w, T fill = T{}) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  [[nodiscard]] std::size_t size() const { return data.size(); }
  [[nodiscard]] bool empty() const { return data.empty(); }
  [[nodiscard]] std::size_t index(int i, int j) const {
    assert(i >= 0 && i < height && j >= 0 && j < width);
    return static_cast<std::size_t>(i) * width + j;
  }
  T& operator()(int i, int j) { return data[index(i, j)]; }
  const T& operator()(int i, int j) const { return data[index(i, j)]; }
  T& operator[](std::size_t k) { return data[k]; }
  const T& operator[](std::size_t k) const { return data[k]; }

  [[nodiscard]] std::span<T> row(int i) { return {data.data() + static_cast<std::size_t>(i) * width, static_cast<std::size_t>(width)}; }
  [[nodiscard]] std::span<const T> row(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * width, static_cast<std::size_t>(width)};
  }

  template <typename U>
  [[nodiscard]] bool same_shape(const Grid<U>& other) const {
    return height == other.height && width == other.width;
  }
};

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Single-channel intensity image.
using Image = Grid<double>;
/// Metric depth in meters.
using DepthMap = Grid<double>;
/// Per-pixel binary flags (0 / 1).
using Mask = Grid<std::uint8_t>;
/// Per-pixel residual translation field (meters).
using MotionMap = Grid<Vec3>;

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidInput(std::string(what) + ": size mismatch (" + std::to_string(a.height) + "x" +
                       std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                       std::to_string(b.width) + ")");
  }
}

/// Per-pixel scalar error with a validity mask; invalid pixels never enter reductions.
struct ErrorMap {
  Grid<double> value;
  Mask valid;

  ErrorMap() = default;
  ErrorMap(int h, int w) : value(h, w, 0.0), valid(h, w, 0) {}

  [[nodiscard]] int height() const { return value.height; }
  [[nodiscard]] int width() const { return value.width; }
  /// Mean over valid pixels; 0 when none are valid.
  [[nodiscard]] double valid_mean() const;
  [[nodiscard]] std::size_t valid_count() const;
};

}  // namespace photocon
