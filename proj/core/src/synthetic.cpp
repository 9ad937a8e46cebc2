#include "tti/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "tti/errors.hpp"

namespace tti {
namespace {

using Rng = std::mt19937_64;

std::vector<double> gaussian_vector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

// Removes the components along `basis` and normalizes. Returns false if the
// remainder is degenerate.
bool orthonormalize(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
  for (const auto& b : basis) {
    const double d = dot(v, b);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= d * b[i];
  }
  const double n = l2_norm(v);
  if (n < 1e-8) return false;
  for (double& x : v) x /= n;
  return true;
}

std::vector<double> orthonormal_draw(std::size_t n, const std::vector<std::vector<double>>& basis,
                                     Rng& rng) {
  while (true) {
    auto v = gaussian_vector(n, rng);
    if (orthonormalize(v, basis)) return v;
  }
}

}  // namespace

void SyntheticSpec::validate() const {
  if (channels == 0 || height == 0 || width == 0) throw ConfigError("synthetic extents must be >= 1");
  if (frames == 0 || shots == 0) throw ConfigError("synthetic frames and shots must be >= 1");
  if (background_directions == 0) throw ConfigError("background_directions must be >= 1");
  if (channels < background_directions + 2) {
    throw ConfigError("channels must be >= background_directions + 2");
  }
  if (!direction.empty() && direction.size() != channels) {
    throw ConfigError("direction length must equal channels");
  }
  if (!direction.empty() && l2_norm(direction) < kNormEpsilon) {
    throw ConfigError("direction must be non-zero");
  }
  auto check_fraction = [](double f, const char* what) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError(std::string(what) + " must lie in (0, 1)");
  };
  if (area_fraction_range) {
    check_fraction(area_fraction_range->first, "area_fraction_range");
    check_fraction(area_fraction_range->second, "area_fraction_range");
    if (area_fraction_range->first > area_fraction_range->second) {
      throw ConfigError("area_fraction_range must be ordered");
    }
  } else {
    if (area_fractions.size() != 1 && area_fractions.size() != frames) {
      throw ConfigError("area_fractions must hold 1 or N_v entries");
    }
    for (double f : area_fractions) check_fraction(f, "area_fractions");
  }
  check_fraction(support_area_fraction, "support_area_fraction");
  if (!(noise >= 0.0)) throw ConfigError("noise must be >= 0");
  if (!(motion >= 0.0)) throw ConfigError("motion must be >= 0");
  if (!(background_overlap >= 0.0 && background_overlap < 1.0)) {
    throw ConfigError("background_overlap must lie in [0, 1)");
  }
  // The foreground direction must stay distinguishable from the background
  // directions: total rotation stays below a quarter turn and the angle to
  // the background exceeds the noise scale.
  const double total = std::abs(drift) * static_cast<double>(frames - 1);
  if (total >= std::numbers::pi / 2) {
    throw ConfigError("drift * (N_v - 1) must stay below pi/2");
  }
  if (std::acos(background_overlap) <= noise) {
    throw ConfigError("angle between foreground and background directions must exceed noise");
  }
}

BinaryMask blob_mask(std::size_t height, std::size_t width, double cy, double cx, double aspect,
                     std::size_t count) {
  const std::size_t n = height * width;
  count = std::min(count, n);
  std::vector<double> key(n);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      key[y * width + x] = aspect * dy * dy + dx * dx / aspect;
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  std::vector<std::uint8_t> v(n, 0);
  for (std::size_t i = 0; i < count; ++i) v[order[i]] = 1;
  return BinaryMask(height, width, std::move(v));
}

Episode generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t channels = spec.channels;
  const std::size_t h = spec.height;
  const std::size_t w = spec.width;
  const std::size_t pixels = h * w;

  std::vector<double> fg = spec.direction.empty() ? gaussian_vector(channels, rng) : spec.direction;
  orthonormalize(fg, {});
  std::vector<std::vector<double>> basis{fg};
  const auto drift_axis = orthonormal_draw(channels, basis, rng);
  basis.push_back(drift_axis);
  std::vector<std::vector<double>> background;
  const double overlap = spec.background_overlap;
  const double ortho = std::sqrt(1.0 - overlap * overlap);
  for (std::size_t j = 0; j < spec.background_directions; ++j) {
    const auto e = orthonormal_draw(channels, basis, rng);
    basis.push_back(e);
    std::vector<double> b(channels);
    for (std::size_t c = 0; c < channels; ++c) b[c] = overlap * fg[c] + ortho * e[c];
    background.push_back(std::move(b));
  }

  std::vector<double> fractions(spec.frames);
  if (spec.area_fraction_range) {
    std::uniform_real_distribution<double> u(spec.area_fraction_range->first,
                                             spec.area_fraction_range->second);
    for (double& f : fractions) f = u(rng);
  } else {
    for (std::size_t t = 0; t < spec.frames; ++t) {
      fractions[t] = spec.area_fractions.size() == 1 ? spec.area_fractions[0] : spec.area_fractions[t];
    }
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> magnitude(0.5, 2.0);
  const double noise_scale = spec.noise / std::sqrt(static_cast<double>(channels));

  auto render = [&](const BinaryMask& mask, const std::vector<double>& direction) {
    std::vector<double> data(channels * pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
      const std::vector<double>* base = &direction;
      if (mask[p] == 0) {
        const auto j = static_cast<std::size_t>(unit(rng) * static_cast<double>(background.size()));
        base = &background[std::min(j, background.size() - 1)];
      }
      const double scale = magnitude(rng);
      for (std::size_t c = 0; c < channels; ++c) {
        data[c * pixels + p] = scale * ((*base)[c] + noise_scale * normal(rng));
      }
    }
    return FrameFeatures(Tensor({channels, h, w}, std::move(data)));
  };

  auto pixel_count = [&](double fraction) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * static_cast<double>(pixels))));
  };
  auto random_aspect = [&] { return std::exp((unit(rng) - 0.5) * 0.8); };

  Episode ep;
  ep.class_id = 1;
  ep.seed = spec.seed;
  ep.id = "synthetic_s" + std::to_string(spec.seed);

  for (std::size_t k = 0; k < spec.shots; ++k) {
    const double cy = (0.25 + 0.5 * unit(rng)) * static_cast<double>(h - 1);
    const double cx = (0.25 + 0.5 * unit(rng)) * static_cast<double>(w - 1);
    const auto mask = blob_mask(h, w, cy, cx, random_aspect(), pixel_count(spec.support_area_fraction));
    ep.support.push_back({render(mask, fg), mask});
  }

  double cy = (0.35 + 0.3 * unit(rng)) * static_cast<double>(h - 1);
  double cx = (0.35 + 0.3 * unit(rng)) * static_cast<double>(w - 1);
  const double aspect = random_aspect();
  for (std::size_t t = 0; t < spec.frames; ++t) {
    if (t > 0) {
      cy = std::clamp(cy + spec.motion * normal(rng), 0.0, static_cast<double>(h - 1));
      cx = std::clamp(cx + spec.motion * normal(rng), 0.0, static_cast<double>(w - 1));
    }
    const double angle = spec.drift * static_cast<double>(t);
    std::vector<double> dir(channels);
    for (std::size_t c = 0; c < channels; ++c) {
      dir[c] = std::cos(angle) * fg[c] + std::sin(angle) * drift_axis[c];
    }
    const auto mask = blob_mask(h, w, cy, cx, aspect, pixel_count(fractions[t]));
    ep.query.push_back(render(mask, dir));
    ep.ground_truth.push_back(mask);
  }
  return ep;
}

}  // namespace tti
