#include "tti/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tti/errors.hpp"

namespace tti {
namespace {

void require_normalized(const FrameFeatures& f, const char* op) {
  if (!f.normalized()) {
    throw std::invalid_argument(std::string(op) + ": features must be normalized");
  }
}

}  // namespace

FrameFeatures::FrameFeatures(Tensor values, bool normalized)
    : values_(std::move(values)), normalized_(normalized) {
  if (values_.rank() != 3) throw std::invalid_argument("feature maps must have dims [C, H, W]");
  channels_ = values_.dims()[0];
  height_ = values_.dims()[1];
  width_ = values_.dims()[2];
}

std::vector<double> FrameFeatures::column(std::size_t pixel) const {
  std::vector<double> col(channels_);
  for (std::size_t c = 0; c < channels_; ++c) col[c] = at(c, pixel);
  return col;
}

FrameFeatures normalize_features(const FrameFeatures& raw) {
  const std::size_t n = raw.pixels();
  const std::size_t channels = raw.channels();
  std::vector<double> norms(n, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    auto plane = raw.plane(c);
    for (std::size_t p = 0; p < n; ++p) norms[p] += plane[p] * plane[p];
  }
  for (double& v : norms) v = std::sqrt(v);

  std::vector<double> out(channels * n, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    auto plane = raw.plane(c);
    for (std::size_t p = 0; p < n; ++p) {
      if (norms[p] >= kNormEpsilon) out[c * n + p] = plane[p] / norms[p];
    }
  }
  return FrameFeatures(Tensor(raw.tensor().dims(), std::move(out)), true);
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (values_.size() != height_ * width_) {
    throw std::invalid_argument("mask data length does not match height * width");
  }
  for (auto& v : values_) {
    if (v > 1) throw std::invalid_argument("mask entries must be 0 or 1");
  }
}

BinaryMask::BinaryMask(std::size_t height, std::size_t width, std::vector<std::uint8_t> values,
                       std::vector<std::uint8_t> ignore)
    : BinaryMask(height, width, std::move(values)) {
  if (!ignore.empty() && ignore.size() != values_.size()) {
    throw std::invalid_argument("ignore mask extents differ from mask extents");
  }
  ignore_ = std::move(ignore);
  for (auto& v : ignore_) {
    if (v > 1) throw std::invalid_argument("ignore entries must be 0 or 1");
  }
}

BinaryMask BinaryMask::zeros(std::size_t height, std::size_t width) {
  return BinaryMask(height, width, std::vector<std::uint8_t>(height * width, 0));
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

std::vector<double> flatten_parameters(const ClassifierBank& bank) {
  std::vector<double> out;
  out.reserve(bank.size() * (bank.channels() + 1));
  for (const auto& f : bank.frames) {
    out.insert(out.end(), f.weights.begin(), f.weights.end());
    out.push_back(f.bias);
  }
  return out;
}

void assign_parameters(ClassifierBank& bank, std::span<const double> params) {
  std::size_t i = 0;
  for (auto& f : bank.frames) {
    if (i + f.weights.size() + 1 > params.size()) {
      throw std::invalid_argument("assign_parameters: parameter vector too short");
    }
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(i), f.weights.size(), f.weights.begin());
    i += f.weights.size();
    f.bias = params[i++];
  }
  if (i != params.size()) throw std::invalid_argument("assign_parameters: parameter vector too long");
}

std::vector<double> imprint_weights(const SupportSet& support) {
  if (support.empty()) throw std::invalid_argument("imprint_weights: support set is empty");
  const std::size_t channels = support.front().features.channels();
  std::vector<double> prototype(channels, 0.0);

  for (std::size_t k = 0; k < support.size(); ++k) {
    const auto& [features, mask] = support[k];
    require_normalized(features, "imprint_weights");
    if (features.channels() != channels) {
      throw std::invalid_argument("imprint_weights: support shots differ in channel count");
    }
    if (mask.size() != features.pixels()) {
      throw std::invalid_argument("imprint_weights: mask extents differ from feature extents");
    }
    const double mass = static_cast<double>(mask.count());
    if (mass == 0.0) {
      throw EmptySupportMaskError("support mask " + std::to_string(k) + " has no positive pixel");
    }
    for (std::size_t c = 0; c < channels; ++c) {
      auto plane = features.plane(c);
      double pooled = 0.0;
      for (std::size_t p = 0; p < plane.size(); ++p) {
        if (mask[p] != 0) pooled += plane[p];
      }
      prototype[c] += pooled / mass;
    }
  }
  for (double& v : prototype) v /= static_cast<double>(support.size());
  return prototype;
}

std::vector<double> pixel_cosines(const FrameFeatures& features, std::span<const double> weights) {
  require_normalized(features, "pixel_cosines");
  if (features.channels() != weights.size()) {
    throw std::invalid_argument("feature channels (" + std::to_string(features.channels()) +
                                ") differ from classifier dimension (" +
                                std::to_string(weights.size()) + ")");
  }
  const std::size_t n = features.pixels();
  std::vector<double> cos(n, 0.0);
  const double wn = l2_norm(weights);
  if (wn < kNormEpsilon) return cos;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    const double wc = weights[c] / wn;
    auto plane = features.plane(c);
    for (std::size_t p = 0; p < n; ++p) cos[p] += plane[p] * wc;
  }
  // Columns are unit or zero, so the dot with the unit weight is the cosine.
  for (double& v : cos) v = std::clamp(v, -1.0, 1.0);
  return cos;
}

Grid initial_foreground(const FrameFeatures& features, std::span<const double> weights,
                        double temperature, double bias) {
  const auto cos = pixel_cosines(features, weights);
  Grid out(features.height(), features.width());
  for (std::size_t p = 0; p < cos.size(); ++p) out[p] = sigmoid(temperature * (cos[p] - bias));
  return out;
}

double init_bias(const Grid& initial_foreground) { return initial_foreground.mean(); }

Grid predict(const FrameFeatures& features, const FrameClassifier& clf) {
  return initial_foreground(features, clf.weights, clf.temperature, clf.bias);
}

BinaryMask binarize(const Grid& probabilities, double threshold) {
  std::vector<std::uint8_t> out(probabilities.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = probabilities[i] >= threshold ? 1 : 0;
  return BinaryMask(probabilities.height(), probabilities.width(), std::move(out));
}

}  // namespace tti
