#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tti/classifier.hpp"
#include "tti/episode.hpp"
#include "tti/losses.hpp"

namespace tti {

enum class Mode {
  kTti,       // per-frame classifiers, global loss after L_phi, keyframe refinement
  kBaseline,  // per-frame classifiers, no global loss, no refinement
  kNaive,     // one classifier shared by all frames, frame losses averaged
};

/// Which classifiers the keyframe refinement updates.
enum class StageTwoScope {
  kAllFrames,          // every frame's classifier trains on the keyframe
  kKeyframeBroadcast,  // only the keyframe's classifier, then copied to all frames
};

const char* to_string(Mode mode);
Mode parse_mode(const std::string& name);
const char* to_string(StageTwoScope scope);
StageTwoScope parse_stage_two_scope(const std::string& name);

struct TtiConfig {
  int iterations = 50;              // L
  int prior_update_iteration = 10;  // L_phi
  double learning_rate = 0.025;
  double temperature = kDefaultTemperature;
  double contrastive_temperature = 0.1;
  int refinement_iterations = 20;  // L_k
  /// Negatives lie farther than this fraction of the image diagonal from
  /// every positive.
  double negative_distance = 0.25;
  double positive_confidence = 0.8;
  Mode mode = Mode::kTti;

  // Ablation switches; only meaningful in kTti mode.
  bool global_loss = true;
  bool keyframe_refinement = true;
  bool couple_global_prototype = false;
  StageTwoScope stage_two_scope = StageTwoScope::kAllFrames;

  /// Bias used for the initial predictions that set b^0.
  double initial_prediction_bias = 0.0;
  double binarize_threshold = 0.5;
  /// Store the classifier parameters entering every iteration in the trace.
  bool record_parameters = false;

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
};

/// Loss weights at iteration l (1-based) for K shots:
/// (1/K, 1/K, 0) before L_phi and (1/K, 1/K + 1, 1/K) from L_phi on.
Lambdas lambda_schedule(int iteration, int shots, int prior_update_iteration);

struct IterationRecord {
  int iteration = 0;
  Lambdas lambdas;
  LossValues loss;
  GlobalPrototype prototype;       // mean of the weights entering this iteration
  std::vector<double> parameters;  // entering parameters, if recorded

  bool operator==(const IterationRecord&) const = default;
};

struct RefinementRecord {
  int iteration = 0;
  double keyframe_ce = 0.0;

  bool operator==(const RefinementRecord&) const = default;
};

struct OptimizationTrace {
  std::vector<IterationRecord> stage_one;
  std::vector<RefinementRecord> stage_two;
  std::vector<LabelMarginal> priors;  // final P_phi per frame
  std::vector<Grid> stage_one_sigma;  // at l = L
  std::vector<Grid> final_sigma;      // after refinement (== stage one if skipped)
  std::optional<std::size_t> keyframe;
  std::string stage_two_skipped;  // reason, empty if stage two ran or was disabled
  ClassifierBank final_bank;

  bool operator==(const OptimizationTrace&) const = default;
};

/// Imprinted weights shared by all frames and per-frame biases.
ClassifierBank initialize_bank(const FeatureSequence& query, const SupportSet& support,
                               const TtiConfig& cfg);

struct StageOneResult {
  ClassifierBank bank;
  OptimizationTrace trace;
};

/// First optimization stage over L iterations. Features must be normalized.
/// Throws NonFiniteLossError if the objective leaves the reals.
StageOneResult tti_stage1(const FeatureSequence& query, const SupportSet& support,
                          const TtiConfig& cfg);

/// Frame whose foreground signature is most aligned with the mean weight
/// vector; ties go to the smallest index. Throws NoKeyframeError if every
/// foreground signature is the zero-sentinel.
std::size_t select_keyframe(const ClassifierBank& bank, std::span<const Signatures> signatures);

/// Positives: sigma >= positive_confidence. Negatives: farther than
/// negative_distance * diagonal from every positive. Everything else is
/// ignored. Throws EmptyForegroundError when no pixel is positive.
BinaryMask build_pseudo_labels(const Grid& keyframe_sigma, double negative_distance,
                               double positive_confidence);

/// Second stage: L_k steps of cross entropy on the keyframe's features and
/// pseudo-labels. Appends to `trace->stage_two` when given.
ClassifierBank tti_stage2(const ClassifierBank& bank, const FeatureSequence& query,
                          std::size_t keyframe, const BinaryMask& pseudo_labels,
                          const TtiConfig& cfg, OptimizationTrace* trace = nullptr);

struct EpisodeResult {
  std::vector<BinaryMask> masks;
  OptimizationTrace trace;
};

/// Normalizes features, runs both stages as the mode dictates and binarizes
/// the final probabilities.
EpisodeResult run_episode(const Episode& episode, const TtiConfig& cfg);

}  // namespace tti
