#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tti/classifier.hpp"
#include "tti/numerics.hpp"

namespace tti {

/// Probabilities are clamped to [kProbabilityEpsilon, 1 - kProbabilityEpsilon]
/// before any logarithm. Clamped entries contribute zero gradient.
inline constexpr double kProbabilityEpsilon = 1e-7;

/// Gradient with respect to one frame's classifier parameters.
struct FrameGradient {
  std::vector<double> weights;
  double bias = 0.0;

  bool operator==(const FrameGradient&) const = default;
};

/// Soft masked average pools of normalized query features. A side whose
/// probability mass is below kNormEpsilon is the zero-sentinel.
struct Signatures {
  std::vector<double> foreground;
  std::vector<double> background;
  bool foreground_zero = false;
  bool background_zero = false;
  double foreground_mass = 0.0;
  double background_mass = 0.0;
};

/// Mean of the per-frame classifier weights at one iteration.
struct GlobalPrototype {
  std::vector<double> values;
  int iteration = 0;

  bool operator==(const GlobalPrototype&) const = default;
};

/// (background mass, foreground mass), summing to one.
struct LabelMarginal {
  double background = 0.5;
  double foreground = 0.5;

  bool operator==(const LabelMarginal&) const = default;
};

/// Weights of the entropy, KL and global terms in the combined objective.
struct Lambdas {
  double entropy = 0.0;
  double kl = 0.0;
  double global = 0.0;

  bool operator==(const Lambdas&) const = default;
};

struct LossValues {
  double ce = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double global = 0.0;
  double total = 0.0;

  bool operator==(const LossValues&) const = default;
};

/// Loss values of the combined objective plus per-frame gradients.
///
/// The total is the frame average of per-frame objectives L_t, so frame
/// gradients are reported as dL_t/d(w_t, b_t), i.e. N_v times the gradient
/// of `total`. With a decoupled prototype each frame's step depends only on
/// that frame.
struct LossBreakdown : LossValues {
  std::vector<FrameGradient> gradients;
};

/// Cosines and foreground probabilities of one frame under one classifier.
struct FramePrediction {
  std::vector<double> cosines;
  Grid sigma;
};

FramePrediction evaluate_frame(const FrameFeatures& features, const FrameClassifier& clf);

/// Chains a per-pixel gradient dL/dsigma through the cosine-sigmoid
/// prediction to the classifier parameters.
FrameGradient backpropagate(const FrameFeatures& features, const FrameClassifier& clf,
                            const FramePrediction& prediction, std::span<const double> dsigma);

struct SupportLoss {
  double value = 0.0;
  FrameGradient gradient;
};

/// Binary cross entropy on the support set, averaged over scored pixels per
/// shot and then over shots. Ignored pixels are not scored; a shot with no
/// scored pixel contributes nothing.
SupportLoss support_ce(const SupportSet& support, const FrameClassifier& clf);

Signatures compute_signatures(const FrameFeatures& features, const Grid& sigma);

GlobalPrototype global_prototype(const ClassifierBank& bank);

/// Value of the global consistency loss and per-frame gradients.
///
/// Gradients are those of N_v * value (each frame's own term), flowing
/// through the signatures via sigma. With `couple_prototype` the prototype is
/// additionally differentiated as the mean of the bank weights; the caller
/// must then pass global_prototype(bank).
struct GlobalLoss {
  double value = 0.0;
  std::vector<FrameGradient> gradients;
};

GlobalLoss global_loss(const GlobalPrototype& prototype, std::span<const Signatures> signatures,
                       const FeatureSequence& query, std::span<const FramePrediction> predictions,
                       const ClassifierBank& bank, bool couple_prototype = false);

/// Mean binary entropy of the foreground probabilities and its gradient
/// with respect to each probability.
struct PixelLoss {
  double value = 0.0;
  Grid gradient;
};

PixelLoss entropy_loss(const Grid& sigma);

LabelMarginal label_marginal(const Grid& sigma);

/// KL(P || prior) for two-class marginals. `d_foreground` is the derivative
/// with respect to P's foreground mass (background mass moving opposite).
struct KlLoss {
  double value = 0.0;
  double d_foreground = 0.0;
};

KlLoss kl_loss(const LabelMarginal& p, const LabelMarginal& prior);

/// Dense contrastive loss between two normalized frames: each anchor of
/// `anchor_frame` takes its most similar position in `other_frame` as the
/// positive and all positions of `other_frame` as the candidate set.
/// Returns the mean over anchors.
double dense_contrastive_loss(const FrameFeatures& anchor_frame, const FrameFeatures& other_frame,
                              double temperature);

/// Combined inference objective of the per-frame classifiers.
///
/// ce, entropy, kl and global are averaged over frames; ce is each frame's
/// classifier evaluated on the support set. `priors` holds one marginal per
/// frame.
LossBreakdown combined_loss(const FeatureSequence& query, const SupportSet& support,
                            const ClassifierBank& bank, const GlobalPrototype& prototype,
                            std::span<const LabelMarginal> priors, const Lambdas& lambdas,
                            bool couple_prototype = false);

}  // namespace tti
