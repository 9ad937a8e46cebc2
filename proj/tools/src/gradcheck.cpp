#include "tti/app/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

#include "tti/classifier.hpp"
#include "tti/numerics.hpp"

namespace tti::app {
namespace {

using Rng = std::mt19937_64;

FrameFeatures random_features(const GradcheckSizes& s, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> data(s.channels * s.height * s.width);
  for (double& v : data) v = normal(rng);
  return normalize_features(FrameFeatures(Tensor({s.channels, s.height, s.width}, std::move(data))));
}

BinaryMask random_mask(const GradcheckSizes& s, Rng& rng) {
  std::bernoulli_distribution on(0.4);
  std::vector<std::uint8_t> v(s.height * s.width);
  for (auto& x : v) x = on(rng) ? 1 : 0;
  v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)] = 1;
  return BinaryMask(s.height, s.width, std::move(v));
}

std::vector<double> flatten(const FrameGradient& g) {
  std::vector<double> out = g.weights;
  out.push_back(g.bias);
  return out;
}

std::vector<double> flatten(const std::vector<FrameGradient>& gs) {
  std::vector<double> out;
  for (const auto& g : gs) {
    out.insert(out.end(), g.weights.begin(), g.weights.end());
    out.push_back(g.bias);
  }
  return out;
}

FrameClassifier with_params(FrameClassifier clf, std::span<const double> p) {
  std::copy_n(p.begin(), clf.weights.size(), clf.weights.begin());
  clf.bias = p[clf.weights.size()];
  return clf;
}

void compare(GradcheckRow& row, std::size_t instance, std::vector<double> analytic,
             const std::vector<double>& numeric, bool flip) {
  if (flip) {
    for (double& a : analytic) a = -a;
  }
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (std::abs(analytic[i]) < 1e-8 && std::abs(numeric[i]) < 1e-8) continue;
    ++row.checked;
    const double e = relative_error(analytic[i], numeric[i]);
    if (e > row.max_relative_error || !std::isfinite(e)) {
      row.max_relative_error = std::isfinite(e) ? e : std::numeric_limits<double>::infinity();
      row.instance = instance;
      row.coordinate = i;
    }
  }
}

// Direct evaluation of the dense contrastive loss: per anchor, pick the
// position of maximal cosine and take -log of its softmax probability.
double contrastive_loop_reference(const FrameFeatures& a, const FrameFeatures& b, double temp) {
  const std::size_t n = a.pixels();
  double total = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const auto anchor = a.column(p);
    std::size_t positive = 0;
    double best = -2.0;
    double denom = 0.0;
    for (std::size_t q = 0; q < n; ++q) {
      const auto other = b.column(q);
      const double cos = cosine_similarity(anchor, other);
      if (cos > best) {
        best = cos;
        positive = q;
      }
      denom += std::exp(dot(anchor, other) / temp);
    }
    const double num = std::exp(dot(anchor, b.column(positive)) / temp);
    total += -std::log(num / denom);
  }
  return total / static_cast<double>(n);
}

}  // namespace

bool GradcheckReport::passed() const {
  return contrastive_value.passed &&
         std::all_of(gradients.begin(), gradients.end(), [](const auto& r) { return r.passed; });
}

double relative_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < 1e-8) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

GradcheckInstance random_instance(const GradcheckSizes& s, std::uint64_t seed) {
  if (s.channels == 0 || s.height == 0 || s.width == 0 || s.frames == 0 || s.shots == 0) {
    throw std::invalid_argument("gradcheck sizes must all be >= 1");
  }
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> bias(-0.2, 0.3);
  std::uniform_real_distribution<double> prior(0.1, 0.9);

  GradcheckInstance inst;
  for (std::size_t k = 0; k < s.shots; ++k) {
    inst.support.push_back({random_features(s, rng), random_mask(s, rng)});
  }
  for (std::size_t t = 0; t < s.frames; ++t) inst.query.push_back(random_features(s, rng));

  const auto prototype = imprint_weights(inst.support);
  for (std::size_t t = 0; t < s.frames; ++t) {
    FrameClassifier clf{prototype, bias(rng), kDefaultTemperature};
    for (double& w : clf.weights) w += 0.3 * normal(rng);
    inst.bank.frames.push_back(std::move(clf));
    const double fg = prior(rng);
    inst.priors.push_back({1.0 - fg, fg});
  }
  const double inv_k = 1.0 / static_cast<double>(s.shots);
  inst.lambdas = {inv_k, inv_k + 1.0, inv_k};
  return inst;
}

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  if (opt.instances == 0) throw std::invalid_argument("gradcheck needs at least one instance");
  GradcheckReport report;
  report.gradients = {{"ce"}, {"entropy"}, {"kl"}, {"global"}, {"combined"}};
  auto& ce_row = report.gradients[0];
  auto& h_row = report.gradients[1];
  auto& kl_row = report.gradients[2];
  auto& g_row = report.gradients[3];
  auto& all_row = report.gradients[4];
  report.contrastive_value.loss = "contrastive_value";

  const double h = opt.step;
  for (std::size_t i = 0; i < opt.instances; ++i) {
    const auto inst = random_instance(opt.sizes, opt.seed + i);
    const auto& clf = inst.bank.frames.front();
    const auto& frame = inst.query.front();
    const auto p0 = flatten(FrameGradient{clf.weights, clf.bias});

    // Support cross entropy.
    {
      auto f = [&](std::span<const double> p) {
        return support_ce(inst.support, with_params(clf, p)).value;
      };
      compare(ce_row, i, flatten(support_ce(inst.support, clf).gradient),
              finite_difference_gradient(f, p0, h), opt.inject_fault == "ce");
    }
    // Entropy, chained through the prediction.
    {
      auto f = [&](std::span<const double> p) {
        return entropy_loss(predict(frame, with_params(clf, p))).value;
      };
      const auto pred = evaluate_frame(frame, clf);
      const auto loss = entropy_loss(pred.sigma);
      compare(h_row, i, flatten(backpropagate(frame, clf, pred, loss.gradient.values())),
              finite_difference_gradient(f, p0, h), opt.inject_fault == "entropy");
    }
    // KL to the frame prior, chained through the label marginal.
    {
      const auto& prior = inst.priors.front();
      auto f = [&](std::span<const double> p) {
        return kl_loss(label_marginal(predict(frame, with_params(clf, p))), prior).value;
      };
      const auto pred = evaluate_frame(frame, clf);
      const auto kl = kl_loss(label_marginal(pred.sigma), prior);
      std::vector<double> dsigma(frame.pixels(),
                                 kl.d_foreground / static_cast<double>(frame.pixels()));
      compare(kl_row, i, flatten(backpropagate(frame, clf, pred, dsigma)),
              finite_difference_gradient(f, p0, h), opt.inject_fault == "kl");
    }

    const auto bank_params = flatten_parameters(inst.bank);
    const auto prototype = global_prototype(inst.bank);
    const double frames = static_cast<double>(inst.query.size());

    // Global consistency with the prototype held fixed; gradients are per
    // frame objective, i.e. N_v times the gradient of the mean.
    {
      auto evaluate = [&](const ClassifierBank& bank) {
        std::vector<FramePrediction> preds;
        std::vector<Signatures> sigs;
        for (std::size_t t = 0; t < inst.query.size(); ++t) {
          preds.push_back(evaluate_frame(inst.query[t], bank.frames[t]));
          sigs.push_back(compute_signatures(inst.query[t], preds.back().sigma));
        }
        return global_loss(prototype, sigs, inst.query, preds, bank);
      };
      auto f = [&](std::span<const double> p) {
        ClassifierBank b = inst.bank;
        assign_parameters(b, p);
        return frames * evaluate(b).value;
      };
      compare(g_row, i, flatten(evaluate(inst.bank).gradients),
              finite_difference_gradient(f, bank_params, h), opt.inject_fault == "global");
    }
    // Combined objective.
    {
      auto f = [&](std::span<const double> p) {
        ClassifierBank b = inst.bank;
        assign_parameters(b, p);
        return frames * combined_loss(inst.query, inst.support, b, prototype, inst.priors,
                                      inst.lambdas)
                            .total;
      };
      const auto loss =
          combined_loss(inst.query, inst.support, inst.bank, prototype, inst.priors, inst.lambdas);
      compare(all_row, i, flatten(loss.gradients), finite_difference_gradient(f, bank_params, h),
              opt.inject_fault == "combined");
    }
    // Contrastive loss value between the first two frames.
    {
      const auto& a = inst.query.front();
      const auto& b = inst.query.size() > 1 ? inst.query[1] : inst.query.front();
      double value = dense_contrastive_loss(a, b, opt.contrastive_temperature);
      if (opt.inject_fault == "contrastive") value = -value;
      const double ref = contrastive_loop_reference(a, b, opt.contrastive_temperature);
      auto& row = report.contrastive_value;
      ++row.checked;
      const double e = relative_error(value, ref);
      if (e > row.max_relative_error) {
        row.max_relative_error = e;
        row.instance = i;
      }
    }
  }
  for (auto& row : report.gradients) row.passed = row.max_relative_error < opt.tolerance;
  report.contrastive_value.passed = report.contrastive_value.max_relative_error < opt.tolerance;
  return report;
}

}  // namespace tti::app
