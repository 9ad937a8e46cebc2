#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "tti/classifier.hpp"
#include "tti/numerics.hpp"

namespace tti {

using MaskSequence = std::vector<BinaryMask>;

/// |pred & gt| / |pred | gt|, or 1 when both masks are empty.
double iou(const BinaryMask& pred, const BinaryMask& gt);

/// Mean IoU over frames.
double mean_iou(const MaskSequence& pred, const MaskSequence& gt);

struct VideoConsistency {
  std::optional<double> value;  // absent when every window was skipped
  std::size_t scored = 0;
  std::size_t skipped = 0;  // windows whose ground-truth common area is empty
};

/// Video consistency over sliding windows of `window` consecutive frames:
/// the fraction of the ground-truth common area that every prediction in
/// the window also marks, averaged over scored windows.
/// Throws InsufficientFramesError when the sequence is shorter than the window.
VideoConsistency video_consistency(const MaskSequence& pred, const MaskSequence& gt,
                                   std::size_t window);

/// Foreground pixels with a 4-neighbour that is background or off-image.
BinaryMask mask_boundary(const BinaryMask& mask);

/// Default boundary tolerance: 1% of the image diagonal, at least one pixel.
double default_boundary_tolerance(std::size_t height, std::size_t width);

/// Contour F-measure: precision and recall are the fractions of predicted
/// and ground-truth boundary pixels within `tolerance` (Euclidean) of the
/// other boundary. 1 if both masks are empty, 0 if exactly one is.
double boundary_f(const BinaryMask& pred, const BinaryMask& gt, double tolerance);
double boundary_f(const BinaryMask& pred, const BinaryMask& gt);

/// max_k(one-shot IoU_k) - K-shot IoU.
double kshot_stability(double iou_kshot, std::span<const double> iou_one_shot);

/// Nearest-neighbour resampling of a mask to the given extents.
BinaryMask resample_nearest(const BinaryMask& mask, std::size_t height, std::size_t width);

/// Per-pixel mean of masks resampled to height x width.
Grid center_bias_map(std::span<const BinaryMask> masks, std::size_t height, std::size_t width);

struct MetricReport {
  double miou = 0.0;
  std::map<std::size_t, VideoConsistency> vc;
  std::optional<double> boundary_f;
};

MetricReport evaluate_sequence(const MaskSequence& pred, const MaskSequence& gt,
                               std::span<const std::size_t> windows, bool with_boundary_f);

}  // namespace tti
