#include "tti/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "tti/errors.hpp"

namespace tti {
namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw std::invalid_argument("tensor extents must be positive");
    n *= d;
  }
  return n;
}

// Squared distance transform of a 1-D sampled function (lower envelope of
// parabolas). `f` holds 0 at sites and +inf elsewhere.
void edt_1d(std::span<const double> f, std::span<double> out, std::vector<std::size_t>& v,
            std::vector<double>& z) {
  const std::size_t n = f.size();
  const double inf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);

  // Skip leading cells with no site; the envelope starts at the first site.
  std::size_t first = 0;
  while (first < n && std::isinf(f[first])) ++first;
  if (first == n) {
    std::fill(out.begin(), out.end(), inf);
    return;
  }

  std::size_t k = 0;
  v[0] = first;
  z[0] = -inf;
  z[1] = inf;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (std::isinf(f[q])) continue;
    const double dq = static_cast<double>(q);
    double s = 0.0;
    while (true) {
      const double dv = static_cast<double>(v[k]);
      s = ((f[q] + dq * dq) - (f[v[k]] + dv * dv)) / (2.0 * dq - 2.0 * dv);
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }

  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double d = static_cast<double>(q) - static_cast<double>(v[k]);
    out[q] = d * d + f[v[k]];
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
  data_.assign(product(dims_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (data_.size() != product(dims_)) {
    throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                " does not match extents");
  }
  for (double x : data_) {
    if (!std::isfinite(x)) throw std::invalid_argument("tensor entries must be finite");
  }
}

Grid::Grid(std::size_t height, std::size_t width, std::vector<double> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (values_.size() != height_ * width_) {
    throw std::invalid_argument("grid data length does not match height * width");
  }
}

double Grid::mean() const {
  if (values_.empty()) throw std::invalid_argument("mean of an empty grid");
  return std::accumulate(values_.begin(), values_.end(), 0.0) /
         static_cast<double>(values_.size());
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

UnitVector normalize(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("normalize: vector has dimension zero");
  UnitVector out;
  const double n = l2_norm(v);
  if (n < kNormEpsilon) {
    out.data_.assign(v.size(), 0.0);
    out.zero_ = true;
    return out;
  }
  out.data_.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.data_[i] = v[i] / n;
  out.zero_ = false;
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  }
  if (a.empty()) throw std::invalid_argument("cosine_similarity: empty vectors");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na < kNormEpsilon || nb < kNormEpsilon) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  // Below about -745 e^x is not representable; keep the result strictly
  // positive by saturating at the smallest subnormal.
  const double e = std::exp(x);
  return std::max(e / (1.0 + e), std::numeric_limits<double>::denorm_min());
}

Grid distance_transform(const MaskView& mask) {
  const std::size_t h = mask.height;
  const std::size_t w = mask.width;
  if (mask.values.size() != h * w) {
    throw std::invalid_argument("distance_transform: mask size does not match extents");
  }
  if (std::none_of(mask.values.begin(), mask.values.end(),
                   [](std::uint8_t m) { return m != 0; })) {
    throw EmptyForegroundError("distance_transform: mask has no foreground pixel");
  }

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> sq(h * w);
  for (std::size_t i = 0; i < h * w; ++i) sq[i] = mask.values[i] != 0 ? 0.0 : inf;

  std::vector<std::size_t> v;
  std::vector<double> z;
  std::vector<double> f(std::max(h, w));
  std::vector<double> out(std::max(h, w));

  // Columns first, then rows over the column result.
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) f[y] = sq[y * w + x];
    edt_1d(std::span(f).first(h), std::span(out).first(h), v, z);
    for (std::size_t y = 0; y < h; ++y) sq[y * w + x] = out[y];
  }
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(sq.begin() + static_cast<std::ptrdiff_t>(y * w), w, f.begin());
    edt_1d(std::span(f).first(w), std::span(out).first(w), v, z);
    std::copy_n(out.begin(), w, sq.begin() + static_cast<std::ptrdiff_t>(y * w));
  }

  for (double& d : sq) d = std::sqrt(d);
  return Grid(h, w, std::move(sq));
}

std::vector<double> finite_difference_gradient(const ScalarFunction& f,
                                                std::span<const double> p, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_gradient: step must be > 0");
  std::vector<double> x(p.begin(), p.end());
  std::vector<double> grad(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = f(x);
    x[i] = orig - step;
    const double down = f(x);
    x[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace tti
