#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "tti/classifier.hpp"
#include "tti/episode.hpp"

namespace tti {

/// Parameters of a synthetic episode with known ground truth.
///
/// Foreground columns follow a unit direction rotated by `drift` radians per
/// frame (in a plane orthogonal to the background directions) plus isotropic
/// noise. Background columns follow one of `background_directions`
/// directions with cosine `background_overlap` to the foreground direction.
/// Foreground regions are elliptical blobs of an exact pixel count whose
/// centre performs a random walk of `motion` pixels per frame.
struct SyntheticSpec {
  std::size_t channels = 16;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t frames = 8;
  std::size_t shots = 2;
  std::vector<double> direction;  // empty: drawn from the seed
  double drift = 0.0;
  /// Per-frame foreground fractions; a single entry applies to every frame.
  std::vector<double> area_fractions{0.3};
  /// When set, per-frame fractions are drawn uniformly from this range instead.
  std::optional<std::pair<double, double>> area_fraction_range;
  double support_area_fraction = 0.3;
  double noise = 0.1;
  double motion = 0.5;
  std::size_t background_directions = 2;
  double background_overlap = 0.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
};

/// Mask of the `count` pixels nearest to (cy, cx) under the elliptical metric
/// aspect * dy^2 + dx^2 / aspect; ties resolve in raster order.
BinaryMask blob_mask(std::size_t height, std::size_t width, double cy, double cx, double aspect,
                     std::size_t count);

/// Generates one episode with ground truth. Deterministic in `spec.seed`.
Episode generate_synthetic(const SyntheticSpec& spec);

}  // namespace tti
