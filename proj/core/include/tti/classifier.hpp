#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tti/numerics.hpp"

namespace tti {

/// Temperature applied to cosine logits when none is configured.
inline constexpr double kDefaultTemperature = 20.0;

/// Per-frame feature map stored channel-planar as a [C, H, W] tensor.
///
/// After normalize_features() every spatial column has unit norm or is the
/// zero-sentinel, and `normalized()` is true. Operations that compare
/// features with classifier weights require normalized input.
class FrameFeatures {
 public:
  FrameFeatures() = default;
  /// Wraps a rank-3 tensor of raw (unnormalized) features.
  explicit FrameFeatures(Tensor values, bool normalized = false);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t pixels() const noexcept { return height_ * width_; }
  bool normalized() const noexcept { return normalized_; }

  const Tensor& tensor() const noexcept { return values_; }

  /// Channel plane c, length H*W.
  std::span<const double> plane(std::size_t c) const {
    return values_.values().subspan(c * pixels(), pixels());
  }
  double at(std::size_t c, std::size_t pixel) const { return values_[c * pixels() + pixel]; }

  /// Copy of the feature column at a flat pixel index.
  std::vector<double> column(std::size_t pixel) const;

 private:
  Tensor values_;
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  bool normalized_ = false;
};

/// Per-column L2 normalization; zero columns stay zero.
FrameFeatures normalize_features(const FrameFeatures& raw);

/// Binary H x W mask with an optional ignore mask of the same extents.
/// Ignored pixels are excluded from every loss.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values);
  BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values,
             std::vector<std::uint8_t> ignore);
  static BinaryMask zeros(std::size_t height, std::size_t width);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::uint8_t operator[](std::size_t i) const { return values_[i]; }
  std::uint8_t operator()(std::size_t y, std::size_t x) const { return values_[y * width_ + x]; }
  void set(std::size_t i, bool on) { values_[i] = on ? 1 : 0; }

  std::span<const std::uint8_t> values() const noexcept { return values_; }
  bool has_ignore() const noexcept { return !ignore_.empty(); }
  bool ignored(std::size_t i) const { return !ignore_.empty() && ignore_[i] != 0; }
  std::span<const std::uint8_t> ignore() const noexcept { return ignore_; }

  std::size_t count() const;
  MaskView view() const { return {height_, width_, values_}; }

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> values_;
  std::vector<std::uint8_t> ignore_;
};

struct SupportShot {
  FrameFeatures features;
  BinaryMask mask;
};

using SupportSet = std::vector<SupportShot>;
using FeatureSequence = std::vector<FrameFeatures>;

struct FrameClassifier {
  std::vector<double> weights;
  double bias = 0.0;
  double temperature = kDefaultTemperature;

  bool operator==(const FrameClassifier&) const = default;
};

/// Per-frame classifiers of one query video. Frames share C and the
/// temperature.
struct ClassifierBank {
  std::vector<FrameClassifier> frames;
  int iteration = 0;

  std::size_t size() const noexcept { return frames.size(); }
  std::size_t channels() const { return frames.empty() ? 0 : frames.front().weights.size(); }

  bool operator==(const ClassifierBank&) const = default;
};

/// Flattens all (weights, bias) pairs frame by frame: [w_0..., b_0, w_1..., b_1, ...].
std::vector<double> flatten_parameters(const ClassifierBank& bank);
void assign_parameters(ClassifierBank& bank, std::span<const double> params);

/// Average over shots of the masked average pool of normalized support
/// features. Throws EmptySupportMaskError if any mask has no positive pixel.
std::vector<double> imprint_weights(const SupportSet& support);

/// Foreground probabilities of the imprinted prototype with the bias held at
/// `bias` (0 by default), used to initialize the per-frame bias.
Grid initial_foreground(const FrameFeatures& features, std::span<const double> weights,
                        double temperature, double bias = 0.0);

/// Mean of the initial foreground probabilities.
double init_bias(const Grid& initial_foreground);

/// Per-pixel cosine between normalized feature columns and `weights`.
std::vector<double> pixel_cosines(const FrameFeatures& features, std::span<const double> weights);

/// sigmoid(temperature * (cos(F(x,y), w) - b)) at every pixel.
Grid predict(const FrameFeatures& features, const FrameClassifier& clf);

/// Foreground where probability >= threshold.
BinaryMask binarize(const Grid& probabilities, double threshold = 0.5);

}  // namespace tti
