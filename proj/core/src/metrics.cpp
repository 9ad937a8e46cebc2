#include "tti/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tti/errors.hpp"

namespace tti {
namespace {

void require_same_extents(const BinaryMask& a, const BinaryMask& b, const char* op) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument(std::string(op) + ": mask extents differ");
  }
}

// Fraction of `from` pixels within `tolerance` of any `to` pixel.
double matched_fraction(const BinaryMask& from, const BinaryMask& to, double tolerance) {
  const std::size_t n = from.count();
  if (n == 0) return 0.0;
  if (to.count() == 0) return 0.0;
  const Grid distance = distance_transform(to.view());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i] != 0 && distance[i] <= tolerance) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(n);
}

}  // namespace

double iou(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_extents(pred, gt, "iou");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += (pred[i] & gt[i]);
    uni += (pred[i] | gt[i]);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double mean_iou(const MaskSequence& pred, const MaskSequence& gt) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw std::invalid_argument("mean_iou: sequences differ in length or are empty");
  }
  double s = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) s += iou(pred[t], gt[t]);
  return s / static_cast<double>(pred.size());
}

VideoConsistency video_consistency(const MaskSequence& pred, const MaskSequence& gt,
                                   std::size_t window) {
  if (window < 2) throw std::invalid_argument("video_consistency: window must be >= 2");
  if (pred.size() != gt.size()) {
    throw std::invalid_argument("video_consistency: sequences differ in length");
  }
  if (gt.size() < window) {
    throw InsufficientFramesError("video_consistency: " + std::to_string(gt.size()) +
                                  " frames for window " + std::to_string(window));
  }
  for (std::size_t t = 0; t < gt.size(); ++t) {
    require_same_extents(pred[t], gt[t], "video_consistency");
    require_same_extents(gt[t], gt.front(), "video_consistency");
  }

  VideoConsistency out;
  double sum = 0.0;
  const std::size_t n = gt.front().size();
  for (std::size_t start = 0; start + window <= gt.size(); ++start) {
    std::size_t common = 0;
    std::size_t agreed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      bool in_gt = true;
      bool in_pred = true;
      for (std::size_t t = start; t < start + window; ++t) {
        in_gt = in_gt && gt[t][i] != 0;
        in_pred = in_pred && pred[t][i] != 0;
      }
      common += in_gt ? 1 : 0;
      agreed += (in_gt && in_pred) ? 1 : 0;
    }
    if (common == 0) {
      ++out.skipped;
      continue;
    }
    ++out.scored;
    sum += static_cast<double>(agreed) / static_cast<double>(common);
  }
  if (out.scored > 0) out.value = sum / static_cast<double>(out.scored);
  return out;
}

BinaryMask mask_boundary(const BinaryMask& mask) {
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  std::vector<std::uint8_t> out(mask.size(), 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (mask(y, x) == 0) continue;
      const bool edge = y == 0 || x == 0 || y + 1 == h || x + 1 == w || mask(y - 1, x) == 0 ||
                        mask(y + 1, x) == 0 || mask(y, x - 1) == 0 || mask(y, x + 1) == 0;
      out[y * w + x] = edge ? 1 : 0;
    }
  }
  return BinaryMask(h, w, std::move(out));
}

double default_boundary_tolerance(std::size_t height, std::size_t width) {
  const double diag =
      std::sqrt(static_cast<double>(height * height) + static_cast<double>(width * width));
  return std::max(1.0, 0.01 * diag);
}

double boundary_f(const BinaryMask& pred, const BinaryMask& gt, double tolerance) {
  require_same_extents(pred, gt, "boundary_f");
  const bool pred_empty = pred.count() == 0;
  const bool gt_empty = gt.count() == 0;
  if (pred_empty && gt_empty) return 1.0;
  if (pred_empty || gt_empty) return 0.0;

  const BinaryMask pb = mask_boundary(pred);
  const BinaryMask gb = mask_boundary(gt);
  const double precision = matched_fraction(pb, gb, tolerance);
  const double recall = matched_fraction(gb, pb, tolerance);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double boundary_f(const BinaryMask& pred, const BinaryMask& gt) {
  return boundary_f(pred, gt, default_boundary_tolerance(gt.height(), gt.width()));
}

double kshot_stability(double iou_kshot, std::span<const double> iou_one_shot) {
  if (iou_one_shot.empty()) throw std::invalid_argument("kshot_stability: no one-shot scores");
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(iou_kshot) || !std::all_of(iou_one_shot.begin(), iou_one_shot.end(), in_unit)) {
    throw std::invalid_argument("kshot_stability: scores must lie in [0, 1]");
  }
  return *std::max_element(iou_one_shot.begin(), iou_one_shot.end()) - iou_kshot;
}

BinaryMask resample_nearest(const BinaryMask& mask, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw std::invalid_argument("resample_nearest: empty target");
  if (mask.height() == height && mask.width() == width) return BinaryMask(height, width,
      std::vector<std::uint8_t>(mask.values().begin(), mask.values().end()));
  std::vector<std::uint8_t> out(height * width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min(mask.height() - 1, (2 * y + 1) * mask.height() / (2 * height));
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min(mask.width() - 1, (2 * x + 1) * mask.width() / (2 * width));
      out[y * width + x] = mask(sy, sx);
    }
  }
  return BinaryMask(height, width, std::move(out));
}

Grid center_bias_map(std::span<const BinaryMask> masks, std::size_t height, std::size_t width) {
  if (masks.empty()) throw std::invalid_argument("center_bias_map: no masks");
  Grid acc(height, width);
  for (const auto& m : masks) {
    const BinaryMask r = resample_nearest(m, height, width);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += r[i];
  }
  const double n = static_cast<double>(masks.size());
  for (double& v : acc.values()) v /= n;
  return acc;
}

MetricReport evaluate_sequence(const MaskSequence& pred, const MaskSequence& gt,
                               std::span<const std::size_t> windows, bool with_boundary_f) {
  MetricReport report;
  report.miou = mean_iou(pred, gt);
  for (std::size_t w : windows) {
    if (gt.size() >= w) report.vc[w] = video_consistency(pred, gt, w);
  }
  if (with_boundary_f) {
    double s = 0.0;
    for (std::size_t t = 0; t < pred.size(); ++t) s += boundary_f(pred[t], gt[t]);
    report.boundary_f = s / static_cast<double>(pred.size());
  }
  return report;
}

}  // namespace tti
