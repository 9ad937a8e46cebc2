#include "tti/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace tti {
namespace {

double clamp_probability(double p) {
  return std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
}

bool is_clamped(double p) { return p <= kProbabilityEpsilon || p >= 1.0 - kProbabilityEpsilon; }

// log(1 + e^x) without overflow. -log(sigmoid(z)) == softplus(-z) keeps full
// precision where 1 - sigmoid(z) would cancel.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// sum_x weight(x) F(x) / mass
std::vector<double> soft_pool(const FrameFeatures& features, std::span<const double> weight,
                              double mass) {
  std::vector<double> out(features.channels(), 0.0);
  for (std::size_t c = 0; c < features.channels(); ++c) {
    auto plane = features.plane(c);
    double s = 0.0;
    for (std::size_t p = 0; p < plane.size(); ++p) s += weight[p] * plane[p];
    out[c] = s / mass;
  }
  return out;
}

// out[p] = F(p) . direction
std::vector<double> project_columns(const FrameFeatures& features,
                                    std::span<const double> direction) {
  std::vector<double> out(features.pixels(), 0.0);
  for (std::size_t c = 0; c < features.channels(); ++c) {
    const double d = direction[c];
    if (d == 0.0) continue;
    auto plane = features.plane(c);
    for (std::size_t p = 0; p < plane.size(); ++p) out[p] += plane[p] * d;
  }
  return out;
}

// cos(a, b) with d cos / d a. `valid` is false when either side is degenerate;
// the cosine is then 0 and the gradient is empty.
struct CosineWithGrad {
  double value = 0.0;
  bool valid = false;
  std::vector<double> d_first;
};

CosineWithGrad cosine_with_grad(std::span<const double> a, std::span<const double> b) {
  CosineWithGrad out;
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na < kNormEpsilon || nb < kNormEpsilon) return out;
  out.value = std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
  out.valid = true;
  out.d_first.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.d_first[i] = (b[i] / nb - out.value * a[i] / na) / na;
  }
  return out;
}

void add_scaled(std::vector<double>& acc, std::span<const double> v, double scale) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * v[i];
}

// d term / d sigma(x) for a cosine between a fixed prototype and a soft pool
// z = sum w(x) F(x) / sum w(x) with dw/dsigma = sign.
void accumulate_signature_grad(const FrameFeatures& features, std::span<const double> signature,
                               double mass, std::span<const double> d_signature, double sign,
                               double scale, std::vector<double>& dsigma) {
  const auto proj = project_columns(features, d_signature);
  const double offset = dot(d_signature, signature);
  const double k = scale * sign / mass;
  for (std::size_t p = 0; p < dsigma.size(); ++p) dsigma[p] += k * (proj[p] - offset);
}

}  // namespace

FramePrediction evaluate_frame(const FrameFeatures& features, const FrameClassifier& clf) {
  FramePrediction out;
  out.cosines = pixel_cosines(features, clf.weights);
  out.sigma = Grid(features.height(), features.width());
  for (std::size_t p = 0; p < out.cosines.size(); ++p) {
    out.sigma[p] = sigmoid(clf.temperature * (out.cosines[p] - clf.bias));
  }
  return out;
}

FrameGradient backpropagate(const FrameFeatures& features, const FrameClassifier& clf,
                            const FramePrediction& prediction, std::span<const double> dsigma) {
  const std::size_t n = features.pixels();
  if (dsigma.size() != n) throw std::invalid_argument("backpropagate: gradient size mismatch");

  FrameGradient g;
  g.weights.assign(clf.weights.size(), 0.0);

  // a(x) = dL/dsigma * dsigma/dcos
  std::vector<double> a(n);
  double sum_a = 0.0;
  double sum_as = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double s = prediction.sigma[p];
    a[p] = dsigma[p] * clf.temperature * s * (1.0 - s);
    sum_a += a[p];
    sum_as += a[p] * prediction.cosines[p];
  }
  g.bias = -sum_a;

  const double wn = l2_norm(clf.weights);
  if (wn < kNormEpsilon) return g;
  // d cos(F, w) / d w = (F - cos * w / |w|) / |w| for unit columns F.
  for (std::size_t c = 0; c < clf.weights.size(); ++c) {
    auto plane = features.plane(c);
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p) s += a[p] * plane[p];
    g.weights[c] = (s - sum_as * clf.weights[c] / wn) / wn;
  }
  return g;
}

SupportLoss support_ce(const SupportSet& support, const FrameClassifier& clf) {
  if (support.empty()) throw std::invalid_argument("support_ce: support set is empty");
  SupportLoss out;
  out.gradient.weights.assign(clf.weights.size(), 0.0);
  const double inv_k = 1.0 / static_cast<double>(support.size());

  for (const auto& [features, mask] : support) {
    if (mask.size() != features.pixels()) {
      throw std::invalid_argument("support_ce: mask extents differ from feature extents");
    }
    const auto pred = evaluate_frame(features, clf);
    std::size_t scored = 0;
    for (std::size_t p = 0; p < mask.size(); ++p) scored += mask.ignored(p) ? 0 : 1;
    if (scored == 0) continue;
    const double inv_n = 1.0 / static_cast<double>(scored);

    std::vector<double> dsigma(mask.size(), 0.0);
    double loss = 0.0;
    for (std::size_t p = 0; p < mask.size(); ++p) {
      if (mask.ignored(p)) continue;
      const double s = pred.sigma[p];
      const double sc = clamp_probability(s);
      const bool clamped = is_clamped(s);
      const bool positive = mask[p] != 0;
      if (clamped) {
        // The labelled class sits at exactly eps or 1 - eps.
        const bool agrees = positive == (s >= 0.5);
        loss += agrees ? -std::log1p(-kProbabilityEpsilon) : -std::log(kProbabilityEpsilon);
        continue;
      }
      const double z = clf.temperature * (pred.cosines[p] - clf.bias);
      loss += softplus(positive ? -z : z);
      dsigma[p] = positive ? -inv_n * inv_k / sc : inv_n * inv_k / (1.0 - sc);
    }
    out.value += loss * inv_n * inv_k;
    const auto g = backpropagate(features, clf, pred, dsigma);
    add_scaled(out.gradient.weights, g.weights, 1.0);
    out.gradient.bias += g.bias;
  }
  return out;
}

Signatures compute_signatures(const FrameFeatures& features, const Grid& sigma) {
  if (!features.normalized()) {
    throw std::invalid_argument("compute_signatures: features must be normalized");
  }
  if (sigma.size() != features.pixels()) {
    throw std::invalid_argument("compute_signatures: probability map extents differ");
  }
  Signatures sig;
  std::vector<double> bg(sigma.size());
  for (std::size_t p = 0; p < sigma.size(); ++p) {
    sig.foreground_mass += sigma[p];
    bg[p] = 1.0 - sigma[p];
    sig.background_mass += bg[p];
  }
  sig.foreground_zero = sig.foreground_mass < kNormEpsilon;
  sig.background_zero = sig.background_mass < kNormEpsilon;
  sig.foreground = sig.foreground_zero ? std::vector<double>(features.channels(), 0.0)
                                       : soft_pool(features, sigma.values(), sig.foreground_mass);
  sig.background = sig.background_zero ? std::vector<double>(features.channels(), 0.0)
                                       : soft_pool(features, bg, sig.background_mass);
  return sig;
}

GlobalPrototype global_prototype(const ClassifierBank& bank) {
  if (bank.size() == 0) throw std::invalid_argument("global_prototype: empty classifier bank");
  GlobalPrototype out;
  out.iteration = bank.iteration;
  out.values.assign(bank.channels(), 0.0);
  for (const auto& f : bank.frames) add_scaled(out.values, f.weights, 1.0);
  const double inv = 1.0 / static_cast<double>(bank.size());
  for (double& v : out.values) v *= inv;
  return out;
}

GlobalLoss global_loss(const GlobalPrototype& prototype, std::span<const Signatures> signatures,
                       const FeatureSequence& query, std::span<const FramePrediction> predictions,
                       const ClassifierBank& bank, bool couple_prototype) {
  const std::size_t frames = query.size();
  if (frames == 0 || signatures.size() != frames || predictions.size() != frames ||
      bank.size() != frames) {
    throw std::invalid_argument("global_loss: per-frame inputs differ in length");
  }
  const std::size_t channels = prototype.values.size();
  const double inv_n = 1.0 / static_cast<double>(frames);

  GlobalLoss out;
  out.gradients.resize(frames);
  std::vector<double> d_prototype(channels, 0.0);

  for (std::size_t t = 0; t < frames; ++t) {
    const auto& sig = signatures[t];
    std::vector<double> dsigma(query[t].pixels(), 0.0);
    bool any_grad = false;

    const auto fg = sig.foreground_zero ? CosineWithGrad{}
                                        : cosine_with_grad(sig.foreground, prototype.values);
    out.value += inv_n * (1.0 - fg.value);
    if (fg.valid) {
      // term = 1 - cos(z_fg, prototype); dz_fg/dsigma(x) = (F(x) - z_fg) / m_fg
      accumulate_signature_grad(query[t], sig.foreground, sig.foreground_mass, fg.d_first, +1.0,
                                -1.0, dsigma);
      any_grad = true;
      if (couple_prototype) {
        const auto d_proto = cosine_with_grad(prototype.values, sig.foreground);
        add_scaled(d_prototype, d_proto.d_first, -1.0);
      }
    }

    const auto bgc = sig.background_zero ? CosineWithGrad{}
                                         : cosine_with_grad(sig.background, prototype.values);
    if (bgc.value > 0.0) {
      out.value += inv_n * bgc.value;
      // dz_bg/dsigma(x) = -(F(x) - z_bg) / m_bg
      accumulate_signature_grad(query[t], sig.background, sig.background_mass, bgc.d_first, -1.0,
                                +1.0, dsigma);
      any_grad = true;
      if (couple_prototype) {
        const auto d_proto = cosine_with_grad(prototype.values, sig.background);
        add_scaled(d_prototype, d_proto.d_first, +1.0);
      }
    }

    if (any_grad) {
      out.gradients[t] = backpropagate(query[t], bank.frames[t], predictions[t], dsigma);
    } else {
      out.gradients[t].weights.assign(channels, 0.0);
    }
  }

  if (couple_prototype) {
    // prototype = mean of weights; frame gradients are scaled by N_v, so each
    // frame receives sum_t dG_t/dprototype * (1/N_v).
    for (auto& g : out.gradients) add_scaled(g.weights, d_prototype, inv_n);
  }
  return out;
}

PixelLoss entropy_loss(const Grid& sigma) {
  if (sigma.size() == 0) throw std::invalid_argument("entropy_loss: empty probability map");
  PixelLoss out;
  out.gradient = Grid(sigma.height(), sigma.width());
  const double inv_n = 1.0 / static_cast<double>(sigma.size());
  double h = 0.0;
  for (std::size_t p = 0; p < sigma.size(); ++p) {
    const double s = clamp_probability(sigma[p]);
    h -= s * std::log(s) + (1.0 - s) * std::log(1.0 - s);
    if (!is_clamped(sigma[p])) out.gradient[p] = inv_n * std::log((1.0 - s) / s);
  }
  out.value = h * inv_n;
  return out;
}

LabelMarginal label_marginal(const Grid& sigma) {
  const double fg = sigma.mean();
  return {1.0 - fg, fg};
}

KlLoss kl_loss(const LabelMarginal& p, const LabelMarginal& prior) {
  for (const auto* m : {&p, &prior}) {
    if (m->background < 0.0 || m->foreground < 0.0 ||
        std::abs(m->background + m->foreground - 1.0) > 1e-9) {
      throw std::invalid_argument("kl_loss: label marginals must be normalized");
    }
  }
  const double m = clamp_probability(p.foreground);
  const double q = clamp_probability(prior.foreground);
  KlLoss out;
  out.value = (1.0 - m) * std::log((1.0 - m) / (1.0 - q)) + m * std::log(m / q);
  if (!is_clamped(p.foreground)) {
    out.d_foreground = std::log(m / q) - std::log((1.0 - m) / (1.0 - q));
  }
  return out;
}

double dense_contrastive_loss(const FrameFeatures& anchor_frame, const FrameFeatures& other_frame,
                              double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("dense_contrastive_loss: temperature must be positive");
  }
  if (!anchor_frame.normalized() || !other_frame.normalized()) {
    throw std::invalid_argument("dense_contrastive_loss: features must be normalized");
  }
  if (anchor_frame.tensor().dims() != other_frame.tensor().dims()) {
    throw std::invalid_argument("dense_contrastive_loss: frame extents differ");
  }
  const std::size_t n = anchor_frame.pixels();
  const std::size_t channels = anchor_frame.channels();

  std::vector<double> logits(n);
  double total = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    std::fill(logits.begin(), logits.end(), 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
      const double fa = anchor_frame.at(c, p);
      if (fa == 0.0) continue;
      auto plane = other_frame.plane(c);
      for (std::size_t a = 0; a < n; ++a) logits[a] += fa * plane[a];
    }
    // Columns are unit or zero, so the largest dot is the most similar position.
    double best = -std::numeric_limits<double>::infinity();
    for (double& l : logits) {
      l /= temperature;
      best = std::max(best, l);
    }
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - best);
    // -log softmax at the positive, whose logit is `best`.
    total += std::log(sum);
  }
  return total / static_cast<double>(n);
}

LossBreakdown combined_loss(const FeatureSequence& query, const SupportSet& support,
                            const ClassifierBank& bank, const GlobalPrototype& prototype,
                            std::span<const LabelMarginal> priors, const Lambdas& lambdas,
                            bool couple_prototype) {
  const std::size_t frames = query.size();
  if (frames == 0 || bank.size() != frames || priors.size() != frames) {
    throw std::invalid_argument("combined_loss: query, bank and priors differ in length");
  }
  const double inv_n = 1.0 / static_cast<double>(frames);

  LossBreakdown out;
  out.gradients.resize(frames);
  std::vector<FramePrediction> predictions;
  std::vector<Signatures> signatures;
  predictions.reserve(frames);
  signatures.reserve(frames);

  std::vector<std::vector<double>> dsigma(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto& clf = bank.frames[t];
    predictions.push_back(evaluate_frame(query[t], clf));
    const Grid& sigma = predictions.back().sigma;
    signatures.push_back(compute_signatures(query[t], sigma));

    const auto ce = support_ce(support, clf);
    const auto h = entropy_loss(sigma);
    const auto kl = kl_loss(label_marginal(sigma), priors[t]);
    out.ce += inv_n * ce.value;
    out.entropy += inv_n * h.value;
    out.kl += inv_n * kl.value;

    auto& d = dsigma[t];
    d.assign(sigma.size(), 0.0);
    const double d_mass = lambdas.kl * kl.d_foreground / static_cast<double>(sigma.size());
    for (std::size_t p = 0; p < d.size(); ++p) d[p] = lambdas.entropy * h.gradient[p] + d_mass;
    out.gradients[t] = ce.gradient;
  }

  const auto global =
      global_loss(prototype, signatures, query, predictions, bank, couple_prototype);
  out.global = global.value;

  for (std::size_t t = 0; t < frames; ++t) {
    const auto g = backpropagate(query[t], bank.frames[t], predictions[t], dsigma[t]);
    auto& acc = out.gradients[t];
    add_scaled(acc.weights, g.weights, 1.0);
    acc.bias += g.bias;
    if (lambdas.global != 0.0) {
      add_scaled(acc.weights, global.gradients[t].weights, lambdas.global);
      acc.bias += lambdas.global * global.gradients[t].bias;
    }
  }

  out.total = out.ce + lambdas.entropy * out.entropy + lambdas.kl * out.kl +
              lambdas.global * out.global;
  return out;
}

}  // namespace tti
