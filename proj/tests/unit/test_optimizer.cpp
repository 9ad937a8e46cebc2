#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tti/errors.hpp"
#include "tti/optimizer.hpp"
#include "tti/synthetic.hpp"

namespace tti {
namespace {

using testing::random_features;
using testing::random_mask;

Episode drifting_episode(std::uint64_t seed, std::size_t frames = 6) {
  SyntheticSpec spec;
  spec.channels = 12;
  spec.height = 10;
  spec.width = 10;
  spec.frames = frames;
  spec.shots = 2;
  spec.drift = 0.05;
  spec.noise = 0.5;
  spec.seed = seed;
  return generate_synthetic(spec);
}

FeatureSequence normalized_query(const Episode& ep) {
  FeatureSequence q;
  for (const auto& f : ep.query) q.push_back(normalize_features(f));
  return q;
}

SupportSet normalized_support(const Episode& ep) {
  SupportSet s;
  for (const auto& shot : ep.support) s.push_back({normalize_features(shot.features), shot.mask});
  return s;
}

TtiConfig short_config(Mode mode = Mode::kTti) {
  TtiConfig cfg;
  cfg.iterations = 12;
  cfg.prior_update_iteration = 4;
  cfg.refinement_iterations = 5;
  cfg.mode = mode;
  return cfg;
}

TEST(LambdaSchedule, FiveShot) {
  EXPECT_EQ(lambda_schedule(1, 5, 10), (Lambdas{0.2, 0.2, 0.0}));
  EXPECT_EQ(lambda_schedule(9, 5, 10), (Lambdas{0.2, 0.2, 0.0}));
  EXPECT_EQ(lambda_schedule(10, 5, 10), (Lambdas{0.2, 1.2, 0.2}));
  EXPECT_EQ(lambda_schedule(50, 5, 10), (Lambdas{0.2, 1.2, 0.2}));
}

TEST(LambdaSchedule, OneShot) {
  EXPECT_EQ(lambda_schedule(3, 1, 10), (Lambdas{1.0, 1.0, 0.0}));
  EXPECT_EQ(lambda_schedule(11, 1, 10), (Lambdas{1.0, 2.0, 1.0}));
}

TEST(LambdaSchedule, RejectsBadArguments) {
  EXPECT_THROW(lambda_schedule(0, 5, 10), std::invalid_argument);
  EXPECT_THROW(lambda_schedule(1, 0, 10), std::invalid_argument);
}

TEST(TtiConfig, ValidationNamesInvariant) {
  TtiConfig cfg;
  cfg.prior_update_iteration = cfg.iterations;
  try {
    cfg.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("L_phi < L"), std::string::npos);
  }
  cfg = TtiConfig{};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TtiConfig{};
  cfg.negative_distance = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TtiConfig{};
  cfg.positive_confidence = 0.4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_NO_THROW(TtiConfig{}.validate());
}

TEST(Modes, ParseAndPrint) {
  for (auto m : {Mode::kTti, Mode::kBaseline, Mode::kNaive}) EXPECT_EQ(parse_mode(to_string(m)), m);
  EXPECT_THROW(parse_mode("greedy"), ConfigError);
  for (auto s : {StageTwoScope::kAllFrames, StageTwoScope::kKeyframeBroadcast}) {
    EXPECT_EQ(parse_stage_two_scope(to_string(s)), s);
  }
}

TEST(StageOne, TraceLengthScheduleAndBarrier) {
  const auto ep = drifting_episode(1);
  auto cfg = short_config();
  cfg.record_parameters = true;
  const auto [bank, trace] = tti_stage1(normalized_query(ep), normalized_support(ep), cfg);
  ASSERT_EQ(trace.stage_one.size(), 12u);
  const std::size_t channels = bank.channels();
  for (const auto& r : trace.stage_one) {
    EXPECT_EQ(r.lambdas, lambda_schedule(r.iteration, 2, cfg.prior_update_iteration));
    // Prototype equals the mean of the weights entering the iteration.
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < bank.size(); ++t) s += r.parameters[t * (channels + 1) + c];
      EXPECT_NEAR(r.prototype.values[c], s / static_cast<double>(bank.size()), 1e-12);
    }
  }
  EXPECT_EQ(bank.iteration, 12);
}

TEST(StageOne, IdenticalQueryAndSupportReducesCe) {
  std::mt19937_64 rng(2);
  const auto f = random_features(8, 6, 6, rng);
  auto m = random_mask(6, 6, 0.4, rng);
  m.set(0, true);
  const SupportSet support{{f, m}};
  const FeatureSequence query{f, f, f};
  const auto [bank, trace] = tti_stage1(query, support, short_config());
  EXPECT_LT(trace.stage_one.back().loss.ce, trace.stage_one.front().loss.ce);
}

TEST(StageOne, DefaultRunDoesNotDiverge) {
  SyntheticSpec spec;
  spec.shots = 5;
  spec.frames = 6;
  spec.drift = 0.05;
  spec.noise = 0.5;
  spec.seed = 3;
  const auto ep = generate_synthetic(spec);
  const TtiConfig cfg;  // defaults: L = 50, L_phi = 10
  const auto [bank, trace] = tti_stage1(normalized_query(ep), normalized_support(ep), cfg);
  EXPECT_LE(trace.stage_one.back().loss.total,
            trace.stage_one[static_cast<std::size_t>(cfg.prior_update_iteration - 1)].loss.total);
}

TEST(StageOne, BaselineEqualsTtiWithoutGlobalLoss) {
  const auto ep = drifting_episode(4);
  auto tti = short_config(Mode::kTti);
  tti.global_loss = false;
  const auto a = tti_stage1(normalized_query(ep), normalized_support(ep), tti);
  const auto b = tti_stage1(normalized_query(ep), normalized_support(ep), short_config(Mode::kBaseline));
  EXPECT_EQ(a.bank, b.bank);
  EXPECT_EQ(a.trace.stage_one, b.trace.stage_one);
}

TEST(StageOne, BaselineFramesMatchOneFrameVideos) {
  const auto ep = drifting_episode(5, 4);
  const auto query = normalized_query(ep);
  const auto support = normalized_support(ep);
  const auto cfg = short_config(Mode::kBaseline);
  const auto all = tti_stage1(query, support, cfg);
  for (std::size_t t = 0; t < query.size(); ++t) {
    const auto one = tti_stage1({query[t]}, support, cfg);
    EXPECT_EQ(one.bank.frames[0], all.bank.frames[t]) << "frame " << t;
    EXPECT_EQ(one.trace.stage_one_sigma[0], all.trace.stage_one_sigma[t]);
  }
}

TEST(StageOne, NaiveModeSharesOneClassifier) {
  const auto ep = drifting_episode(6);
  const auto [bank, trace] =
      tti_stage1(normalized_query(ep), normalized_support(ep), short_config(Mode::kNaive));
  for (const auto& f : bank.frames) EXPECT_EQ(f, bank.frames.front());
}

// Clamping and the zero-sentinels absorb overflowing parameters, so even a
// wildly unstable configuration keeps every loss term finite.
TEST(StageOne, OverflowingStepsKeepLossesFinite) {
  const auto ep = drifting_episode(7);
  auto cfg = short_config(Mode::kBaseline);
  cfg.learning_rate = 1.7e308;
  cfg.temperature = 1e308;
  const auto r = tti_stage1(normalized_query(ep), normalized_support(ep), cfg);
  for (const auto& rec : r.trace.stage_one) EXPECT_TRUE(std::isfinite(rec.loss.total));
}

TEST(StageOne, NonFiniteErrorCarriesIteration) {
  const NonFiniteLossError e("non-finite loss at iteration 7", 7);
  EXPECT_EQ(e.iteration(), 7);
}

TEST(StageOne, RequiresNormalizedFeatures) {
  const auto ep = drifting_episode(8);
  EXPECT_THROW(tti_stage1(ep.query, normalized_support(ep), short_config()),
               std::invalid_argument);
}

TEST(StageOne, EmptySupportMaskPropagates) {
  const auto ep = drifting_episode(9);
  auto support = normalized_support(ep);
  support[0].mask = BinaryMask::zeros(support[0].mask.height(), support[0].mask.width());
  EXPECT_THROW(tti_stage1(normalized_query(ep), support, short_config()), EmptySupportMaskError);
}

// ---- keyframe ----------------------------------------------------------------

Signatures with_foreground(std::vector<double> fg) {
  Signatures s;
  s.foreground = std::move(fg);
  s.background.assign(s.foreground.size(), 0.0);
  s.foreground_mass = 1.0;
  return s;
}

TEST(Keyframe, SingleFrame) {
  ClassifierBank bank;
  bank.frames = {{{1.0, 0.0}, 0.0, 20.0}};
  const std::vector<Signatures> sigs{with_foreground({0.1, 0.7})};
  EXPECT_EQ(select_keyframe(bank, sigs), 0u);
}

TEST(Keyframe, TiesGoToSmallestIndex) {
  ClassifierBank bank;
  bank.frames.assign(3, {{1.0, 0.0}, 0.0, 20.0});
  const std::vector<Signatures> sigs{with_foreground({0.2, std::sqrt(1 - 0.04)}),
                                     with_foreground({0.9, std::sqrt(1 - 0.81)}),
                                     with_foreground({0.9, std::sqrt(1 - 0.81)})};
  EXPECT_EQ(select_keyframe(bank, sigs), 1u);
}

TEST(Keyframe, SkipsZeroSentinelsAndThrowsWhenAllAreZero) {
  ClassifierBank bank;
  bank.frames.assign(2, {{1.0, 0.0}, 0.0, 20.0});
  Signatures zero = with_foreground({0.0, 0.0});
  zero.foreground_zero = true;
  EXPECT_EQ(select_keyframe(bank, std::vector<Signatures>{zero, with_foreground({-1.0, 0.0})}), 1u);
  EXPECT_THROW(select_keyframe(bank, std::vector<Signatures>{zero, zero}), NoKeyframeError);
}

TEST(Keyframe, MatchesExhaustiveScan) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    ClassifierBank bank;
    std::vector<Signatures> sigs;
    for (int t = 0; t < 6; ++t) {
      std::vector<double> w(5), z(5);
      for (double& v : w) v = normal(rng);
      for (double& v : z) v = normal(rng);
      bank.frames.push_back({w, 0.0, 20.0});
      sigs.push_back(with_foreground(z));
    }
    std::vector<double> omega(5, 0.0);
    for (const auto& f : bank.frames) {
      for (std::size_t c = 0; c < 5; ++c) omega[c] += f.weights[c] / 6.0;
    }
    std::size_t best = 0;
    double best_cos = -2.0;
    for (std::size_t t = 0; t < 6; ++t) {
      double d = 0, a = 0, b = 0;
      for (std::size_t c = 0; c < 5; ++c) {
        d += sigs[t].foreground[c] * omega[c];
        a += sigs[t].foreground[c] * sigs[t].foreground[c];
        b += omega[c] * omega[c];
      }
      const double cos = d / std::sqrt(a * b);
      if (cos > best_cos) {
        best_cos = cos;
        best = t;
      }
    }
    EXPECT_EQ(select_keyframe(bank, sigs), best);
  }
}

// ---- pseudo-labels -------------------------------------------------------------

TEST(PseudoLabels, AllConfident) {
  const auto m = build_pseudo_labels(Grid(4, 4, 0.99), 0.25, 0.8);
  EXPECT_EQ(m.count(), 16u);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_FALSE(m.ignored(i));
}

TEST(PseudoLabels, SingleConfidentPixel) {
  Grid g(32, 32, 0.3);
  g(10, 20) = 0.95;
  const auto m = build_pseudo_labels(g, 0.25, 0.8);
  const double radius = 0.25 * std::sqrt(2048.0);
  EXPECT_NEAR(radius, 11.3137, 1e-4);
  for (std::size_t y = 0; y < 32; ++y) {
    for (std::size_t x = 0; x < 32; ++x) {
      const std::size_t i = y * 32 + x;
      const double d = std::hypot(static_cast<double>(y) - 10.0, static_cast<double>(x) - 20.0);
      if (y == 10 && x == 20) {
        EXPECT_EQ(m[i], 1);
        EXPECT_FALSE(m.ignored(i));
      } else {
        EXPECT_EQ(m[i], 0);
        EXPECT_EQ(m.ignored(i), d <= radius) << y << "," << x;
      }
    }
  }
}

TEST(PseudoLabels, NothingConfidentThrows) {
  EXPECT_THROW(build_pseudo_labels(Grid(4, 4, 0.6), 0.25, 0.8), EmptyForegroundError);
}

// ---- stage two -------------------------------------------------------------------

struct StageTwoFixture {
  FeatureSequence query;
  ClassifierBank bank;
  BinaryMask pseudo;
  std::size_t key = 0;
};

StageTwoFixture stage_two_fixture(std::uint64_t seed) {
  const auto ep = drifting_episode(seed);
  StageTwoFixture fx;
  fx.query = normalized_query(ep);
  const auto [bank, trace] = tti_stage1(fx.query, normalized_support(ep), short_config());
  fx.bank = bank;
  std::vector<Signatures> sigs;
  for (std::size_t t = 0; t < fx.query.size(); ++t) {
    sigs.push_back(compute_signatures(fx.query[t], trace.stage_one_sigma[t]));
  }
  fx.key = select_keyframe(bank, sigs);
  fx.pseudo = build_pseudo_labels(trace.stage_one_sigma[fx.key], 0.25, 0.8);
  return fx;
}

TEST(StageTwo, ZeroIterationsLeaveBankUnchanged) {
  const auto fx = stage_two_fixture(11);
  auto cfg = short_config();
  cfg.refinement_iterations = 0;
  EXPECT_EQ(tti_stage2(fx.bank, fx.query, fx.key, fx.pseudo, cfg).frames, fx.bank.frames);
}

TEST(StageTwo, AllIgnoredLeavesBankUnchanged) {
  const auto fx = stage_two_fixture(12);
  const std::vector<std::uint8_t> all(fx.pseudo.size(), 1);
  const BinaryMask ignored(fx.pseudo.height(), fx.pseudo.width(),
                           {fx.pseudo.values().begin(), fx.pseudo.values().end()}, all);
  EXPECT_EQ(tti_stage2(fx.bank, fx.query, fx.key, ignored, short_config()).frames,
            fx.bank.frames);
}

TEST(StageTwo, KeyframeCeDecreases) {
  const auto fx = stage_two_fixture(13);
  OptimizationTrace trace;
  const auto cfg = short_config();
  const auto out = tti_stage2(fx.bank, fx.query, fx.key, fx.pseudo, cfg, &trace);
  ASSERT_EQ(trace.stage_two.size(), static_cast<std::size_t>(cfg.refinement_iterations));
  const double after = support_ce({{fx.query[fx.key], fx.pseudo}}, out.frames[fx.key]).value;
  EXPECT_LE(after, trace.stage_two.front().keyframe_ce + 1e-12);
}

TEST(StageTwo, BroadcastCopiesKeyframeClassifier) {
  const auto fx = stage_two_fixture(14);
  auto cfg = short_config();
  cfg.stage_two_scope = StageTwoScope::kKeyframeBroadcast;
  const auto out = tti_stage2(fx.bank, fx.query, fx.key, fx.pseudo, cfg);
  for (const auto& f : out.frames) EXPECT_EQ(f, out.frames[fx.key]);
}

// ---- full episode ----------------------------------------------------------------

TEST(RunEpisode, DeterministicTrace) {
  const auto ep = drifting_episode(15);
  const auto a = run_episode(ep, short_config());
  const auto b = run_episode(ep, short_config());
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.masks, b.masks);
}

TEST(RunEpisode, TraceLengthsAndKeyframe) {
  const auto ep = drifting_episode(16);
  const auto cfg = short_config();
  const auto r = run_episode(ep, cfg);
  EXPECT_EQ(r.trace.stage_one.size(), static_cast<std::size_t>(cfg.iterations));
  ASSERT_TRUE(r.trace.keyframe.has_value());
  EXPECT_LT(*r.trace.keyframe, ep.query.size());
  EXPECT_EQ(r.trace.stage_two.size(), static_cast<std::size_t>(cfg.refinement_iterations));
  EXPECT_EQ(r.masks.size(), ep.query.size());
}

TEST(RunEpisode, NaiveModeEmitsPerFrameMasks) {
  const auto ep = drifting_episode(17);
  const auto r = run_episode(ep, short_config(Mode::kNaive));
  EXPECT_EQ(r.masks.size(), ep.query.size());
  EXPECT_FALSE(r.trace.keyframe.has_value());
  EXPECT_TRUE(r.trace.stage_two.empty());
}

TEST(RunEpisode, KeyframeInvariantToRawRescaling) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto ep = drifting_episode(100 + seed);
    const auto base = run_episode(ep, short_config());
    for (auto& f : ep.query) {
      std::vector<double> v(f.tensor().values().begin(), f.tensor().values().end());
      for (double& x : v) x *= 6.5;
      f = FrameFeatures(Tensor(f.tensor().dims(), std::move(v)));
    }
    EXPECT_EQ(run_episode(ep, short_config()).trace.keyframe, base.trace.keyframe);
  }
}

TEST(RunEpisode, SkipsStageTwoWhenNothingIsConfident) {
  const auto ep = drifting_episode(18);
  auto cfg = short_config();
  cfg.positive_confidence = 0.9999999;
  cfg.temperature = 0.5;  // probabilities stay near 0.5
  const auto r = run_episode(ep, cfg);
  EXPECT_FALSE(r.trace.stage_two_skipped.empty());
  EXPECT_TRUE(r.trace.stage_two.empty());
  EXPECT_EQ(r.trace.final_sigma, r.trace.stage_one_sigma);
}

}  // namespace
}  // namespace tti
