#include "tti/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tti/errors.hpp"

namespace tti {
namespace {

void require_normalized(const FeatureSequence& query, const SupportSet& support) {
  for (const auto& f : query) {
    if (!f.normalized()) throw std::invalid_argument("query features must be normalized");
  }
  for (const auto& s : support) {
    if (!s.features.normalized()) throw std::invalid_argument("support features must be normalized");
  }
}

void check_finite(const LossValues& v, int iteration) {
  for (double x : {v.ce, v.entropy, v.kl, v.global, v.total}) {
    if (!std::isfinite(x)) {
      throw NonFiniteLossError("non-finite loss at iteration " + std::to_string(iteration),
                               iteration);
    }
  }
}

void step(FrameClassifier& clf, const FrameGradient& g, double rate) {
  for (std::size_t c = 0; c < clf.weights.size(); ++c) clf.weights[c] -= rate * g.weights[c];
  clf.bias -= rate * g.bias;
}

std::vector<Grid> predict_all(const FeatureSequence& query, const ClassifierBank& bank) {
  std::vector<Grid> out;
  out.reserve(query.size());
  for (std::size_t t = 0; t < query.size(); ++t) out.push_back(predict(query[t], bank.frames[t]));
  return out;
}

}  // namespace

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::kTti: return "tti";
    case Mode::kBaseline: return "baseline";
    case Mode::kNaive: return "naive";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  if (name == "tti") return Mode::kTti;
  if (name == "baseline") return Mode::kBaseline;
  if (name == "naive") return Mode::kNaive;
  throw ConfigError("mode must be one of tti, baseline, naive (got '" + name + "')");
}

const char* to_string(StageTwoScope scope) {
  return scope == StageTwoScope::kAllFrames ? "all_frames" : "keyframe_broadcast";
}

StageTwoScope parse_stage_two_scope(const std::string& name) {
  if (name == "all_frames") return StageTwoScope::kAllFrames;
  if (name == "keyframe_broadcast") return StageTwoScope::kKeyframeBroadcast;
  throw ConfigError("stage_two_scope must be all_frames or keyframe_broadcast (got '" + name +
                    "')");
}

void TtiConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations (L) must be >= 1");
  if (prior_update_iteration <= 0 || prior_update_iteration >= iterations) {
    throw ConfigError("prior_update_iteration must satisfy 0 < L_phi < L (got L_phi=" +
                      std::to_string(prior_update_iteration) +
                      ", L=" + std::to_string(iterations) + ")");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (!(contrastive_temperature > 0.0)) throw ConfigError("contrastive_temperature must be > 0");
  if (refinement_iterations < 0) throw ConfigError("refinement_iterations (L_k) must be >= 0");
  if (!(negative_distance > 0.0 && negative_distance < 1.0)) {
    throw ConfigError("negative_distance must lie in (0, 1)");
  }
  if (!(positive_confidence >= 0.5 && positive_confidence < 1.0)) {
    throw ConfigError("positive_confidence must lie in [0.5, 1)");
  }
  if (!(binarize_threshold > 0.0 && binarize_threshold < 1.0)) {
    throw ConfigError("binarize_threshold must lie in (0, 1)");
  }
}

Lambdas lambda_schedule(int iteration, int shots, int prior_update_iteration) {
  if (iteration < 1) throw std::invalid_argument("lambda_schedule: iteration must be >= 1");
  if (shots < 1) throw std::invalid_argument("lambda_schedule: shots must be >= 1");
  const double inv_k = 1.0 / static_cast<double>(shots);
  if (iteration < prior_update_iteration) return {inv_k, inv_k, 0.0};
  return {inv_k, inv_k + 1.0, inv_k};
}

ClassifierBank initialize_bank(const FeatureSequence& query, const SupportSet& support,
                               const TtiConfig& cfg) {
  const auto prototype = imprint_weights(support);
  ClassifierBank bank;
  bank.frames.reserve(query.size());
  for (const auto& frame : query) {
    const Grid p0 = initial_foreground(frame, prototype, cfg.temperature,
                                       cfg.initial_prediction_bias);
    bank.frames.push_back({prototype, init_bias(p0), cfg.temperature});
  }
  if (cfg.mode == Mode::kNaive) {
    double b = 0.0;
    for (const auto& f : bank.frames) b += f.bias;
    b /= static_cast<double>(bank.size());
    for (auto& f : bank.frames) f.bias = b;
  }
  return bank;
}

StageOneResult tti_stage1(const FeatureSequence& query, const SupportSet& support,
                          const TtiConfig& cfg) {
  cfg.validate();
  if (query.empty()) throw std::invalid_argument("tti_stage1: query has no frames");
  if (support.empty()) throw std::invalid_argument("tti_stage1: support set is empty");
  require_normalized(query, support);

  const std::size_t frames = query.size();
  const int shots = static_cast<int>(support.size());
  const bool with_global = cfg.mode == Mode::kTti && cfg.global_loss;

  StageOneResult out;
  ClassifierBank& bank = out.bank;
  bank = initialize_bank(query, support, cfg);

  std::vector<LabelMarginal> priors;
  priors.reserve(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    priors.push_back(label_marginal(predict(query[t], bank.frames[t])));
  }

  auto& trace = out.trace;
  trace.stage_one.reserve(static_cast<std::size_t>(cfg.iterations));
  for (int l = 1; l <= cfg.iterations; ++l) {
    if (l == cfg.prior_update_iteration) {
      for (std::size_t t = 0; t < frames; ++t) {
        priors[t] = label_marginal(predict(query[t], bank.frames[t]));
      }
    }
    Lambdas lambdas = lambda_schedule(l, shots, cfg.prior_update_iteration);
    if (!with_global) lambdas.global = 0.0;

    // Every frame in this iteration sees the prototype of the entering weights.
    const GlobalPrototype prototype = global_prototype(bank);
    const LossBreakdown loss = combined_loss(query, support, bank, prototype, priors, lambdas,
                                             with_global && cfg.couple_global_prototype);
    check_finite(loss, l);

    IterationRecord record;
    record.iteration = l;
    record.lambdas = lambdas;
    record.loss = loss;
    record.prototype = prototype;
    if (cfg.record_parameters) record.parameters = flatten_parameters(bank);
    trace.stage_one.push_back(std::move(record));

    if (cfg.mode == Mode::kNaive) {
      FrameGradient mean;
      mean.weights.assign(bank.channels(), 0.0);
      for (const auto& g : loss.gradients) {
        for (std::size_t c = 0; c < mean.weights.size(); ++c) mean.weights[c] += g.weights[c];
        mean.bias += g.bias;
      }
      const double inv = 1.0 / static_cast<double>(frames);
      for (double& w : mean.weights) w *= inv;
      mean.bias *= inv;
      for (auto& clf : bank.frames) step(clf, mean, cfg.learning_rate);
    } else {
      for (std::size_t t = 0; t < frames; ++t) {
        step(bank.frames[t], loss.gradients[t], cfg.learning_rate);
      }
    }
    bank.iteration = l;
  }

  trace.priors = priors;
  trace.stage_one_sigma = predict_all(query, bank);
  trace.final_sigma = trace.stage_one_sigma;
  trace.final_bank = bank;
  return out;
}

std::size_t select_keyframe(const ClassifierBank& bank, std::span<const Signatures> signatures) {
  if (bank.size() == 0 || signatures.size() != bank.size()) {
    throw std::invalid_argument("select_keyframe: need one signature per frame");
  }
  const GlobalPrototype prototype = global_prototype(bank);
  std::optional<std::size_t> best;
  double best_cos = 0.0;
  for (std::size_t t = 0; t < signatures.size(); ++t) {
    if (signatures[t].foreground_zero) continue;
    const double c = cosine_similarity(signatures[t].foreground, prototype.values);
    if (!best || c > best_cos) {
      best = t;
      best_cos = c;
    }
  }
  if (!best) throw NoKeyframeError("every foreground signature is the zero-sentinel");
  return *best;
}

BinaryMask build_pseudo_labels(const Grid& keyframe_sigma, double negative_distance,
                               double positive_confidence) {
  const std::size_t h = keyframe_sigma.height();
  const std::size_t w = keyframe_sigma.width();
  std::vector<std::uint8_t> positive(keyframe_sigma.size());
  for (std::size_t i = 0; i < positive.size(); ++i) {
    positive[i] = keyframe_sigma[i] >= positive_confidence ? 1 : 0;
  }
  // Throws EmptyForegroundError if nothing reaches the confidence threshold.
  const Grid distance = distance_transform({h, w, positive});
  const double radius =
      negative_distance * std::sqrt(static_cast<double>(h * h) + static_cast<double>(w * w));

  std::vector<std::uint8_t> ignore(positive.size(), 0);
  for (std::size_t i = 0; i < positive.size(); ++i) {
    if (positive[i] == 0 && distance[i] <= radius) ignore[i] = 1;
  }
  return BinaryMask(h, w, std::move(positive), std::move(ignore));
}

ClassifierBank tti_stage2(const ClassifierBank& bank, const FeatureSequence& query,
                          std::size_t keyframe, const BinaryMask& pseudo_labels,
                          const TtiConfig& cfg, OptimizationTrace* trace) {
  if (keyframe >= query.size() || bank.size() != query.size()) {
    throw std::invalid_argument("tti_stage2: keyframe index out of range");
  }
  ClassifierBank out = bank;
  const SupportSet target{{query[keyframe], pseudo_labels}};
  const bool broadcast = cfg.stage_two_scope == StageTwoScope::kKeyframeBroadcast;

  for (int i = 1; i <= cfg.refinement_iterations; ++i) {
    double keyframe_ce = 0.0;
    for (std::size_t t = 0; t < out.size(); ++t) {
      if (broadcast && t != keyframe) continue;
      const auto ce = support_ce(target, out.frames[t]);
      if (t == keyframe) keyframe_ce = ce.value;
      step(out.frames[t], ce.gradient, cfg.learning_rate);
    }
    if (trace != nullptr) trace->stage_two.push_back({i, keyframe_ce});
  }
  if (broadcast && cfg.refinement_iterations > 0) {
    for (auto& f : out.frames) f = out.frames[keyframe];
  }
  out.iteration = bank.iteration + cfg.refinement_iterations;
  return out;
}

EpisodeResult run_episode(const Episode& episode, const TtiConfig& cfg) {
  FeatureSequence query;
  query.reserve(episode.query.size());
  for (const auto& f : episode.query) {
    query.push_back(f.normalized() ? f : normalize_features(f));
  }
  SupportSet support;
  support.reserve(episode.support.size());
  for (const auto& s : episode.support) {
    support.push_back({s.features.normalized() ? s.features : normalize_features(s.features),
                       s.mask});
  }

  auto [bank, trace] = tti_stage1(query, support, cfg);

  if (cfg.mode == Mode::kTti && cfg.keyframe_refinement) {
    std::vector<Signatures> signatures;
    signatures.reserve(query.size());
    for (std::size_t t = 0; t < query.size(); ++t) {
      signatures.push_back(compute_signatures(query[t], trace.stage_one_sigma[t]));
    }
    try {
      const std::size_t key = select_keyframe(bank, signatures);
      trace.keyframe = key;
      const BinaryMask pseudo = build_pseudo_labels(
          trace.stage_one_sigma[key], cfg.negative_distance, cfg.positive_confidence);
      bank = tti_stage2(bank, query, key, pseudo, cfg, &trace);
      trace.final_sigma = predict_all(query, bank);
    } catch (const NoKeyframeError& e) {
      trace.stage_two_skipped = e.what();
    } catch (const EmptyForegroundError& e) {
      trace.stage_two_skipped = e.what();
    }
  }
  trace.final_bank = bank;

  EpisodeResult result;
  result.masks.reserve(query.size());
  for (const auto& sigma : trace.final_sigma) {
    result.masks.push_back(binarize(sigma, cfg.binarize_threshold));
  }
  result.trace = std::move(trace);
  return result;
}

}  // namespace tti
