#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace tti {

/// Norms below this are treated as zero (normalization and cosine).
inline constexpr double kNormEpsilon = 1e-12;

/// Dense row-major tensor of doubles. Entries are always finite.
class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled tensor with the given extents.
  explicit Tensor(std::vector<std::size_t> dims);
  Tensor(std::vector<std::size_t> dims, std::vector<double> data);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

/// A real-valued H x W grid (probability maps, distance maps).
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t height, std::size_t width, double fill = 0.0)
      : height_(height), width_(width), values_(height * width, fill) {}
  Grid(std::size_t height, std::size_t width, std::vector<double> values);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }

  double operator()(std::size_t y, std::size_t x) const { return values_[y * width_ + x]; }
  double& operator()(std::size_t y, std::size_t x) { return values_[y * width_ + x]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double mean() const;

  bool operator==(const Grid&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> values_;
};

/// Result of normalize(): unit norm, or the all-zero sentinel for degenerate
/// input.
class UnitVector {
 public:
  UnitVector() = default;

  std::size_t dim() const noexcept { return data_.size(); }
  bool is_zero() const noexcept { return zero_; }
  std::span<const double> values() const noexcept { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }

 private:
  friend UnitVector normalize(std::span<const double> v);
  std::vector<double> data_;
  bool zero_ = true;
};

/// v / ||v||, or the zero-sentinel when ||v|| < kNormEpsilon.
/// Throws std::invalid_argument for an empty vector.
UnitVector normalize(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// Cosine of the angle between a and b, clamped to [-1, 1]. Zero if either
/// norm is below kNormEpsilon.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Logistic function, stable for large |x|.
double sigmoid(double x);

/// Binary mask as a flat row-major byte grid, used by distance_transform.
struct MaskView {
  std::size_t height = 0;
  std::size_t width = 0;
  std::span<const std::uint8_t> values;
};

/// Exact Euclidean distance from every cell to its nearest non-zero cell.
/// Throws EmptyForegroundError when the mask has no non-zero cell.
Grid distance_transform(const MaskView& mask);

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central-difference gradient of f at p. Non-finite values of f propagate
/// into the result unchanged.
std::vector<double> finite_difference_gradient(const ScalarFunction& f,
                                                std::span<const double> p,
                                                double step = 1e-5);

}  // namespace tti
