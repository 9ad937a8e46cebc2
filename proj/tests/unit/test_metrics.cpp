#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "tti/errors.hpp"
#include "tti/metrics.hpp"

namespace tti {
namespace {

using testing::random_mask;

BinaryMask square(std::size_t n, std::size_t y0, std::size_t x0, std::size_t side) {
  auto m = BinaryMask::zeros(n, n);
  for (std::size_t y = y0; y < y0 + side; ++y) {
    for (std::size_t x = x0; x < x0 + side; ++x) m.set(y * n + x, true);
  }
  return m;
}

BinaryMask complement(const BinaryMask& m) {
  std::vector<std::uint8_t> v(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) v[i] = m[i] != 0 ? 0 : 1;
  return BinaryMask(m.height(), m.width(), std::move(v));
}

TEST(Iou, Examples) {
  const auto a = square(8, 1, 1, 3);
  EXPECT_EQ(iou(a, a), 1.0);
  EXPECT_EQ(iou(a, square(8, 5, 5, 3)), 0.0);
  EXPECT_EQ(iou(BinaryMask::zeros(4, 4), BinaryMask::zeros(4, 4)), 1.0);
  EXPECT_THROW(iou(a, BinaryMask::zeros(4, 4)), std::invalid_argument);
}

TEST(Iou, MatchesCountingOracleAndIsSymmetric) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_mask(16, 16, 0.4, rng);
    const auto b = random_mask(16, 16, 0.4, rng);
    EXPECT_EQ(iou(a, b), testing::iou_oracle(a, b));
    EXPECT_EQ(iou(a, b), iou(b, a));
  }
}

TEST(MeanIou, AveragesFrames) {
  const auto a = square(4, 0, 0, 2);
  EXPECT_DOUBLE_EQ(mean_iou({a, a}, {a, BinaryMask::zeros(4, 4)}), 0.5);
  EXPECT_THROW(mean_iou({a}, {a, a}), std::invalid_argument);
}

TEST(VideoConsistency, PerfectPrediction) {
  std::mt19937_64 rng(2);
  MaskSequence gt;
  for (int t = 0; t < 8; ++t) gt.push_back(random_mask(8, 8, 0.8, rng));
  for (std::size_t w : {2u, 3u, 5u, 8u}) {
    const auto vc = video_consistency(gt, gt, w);
    if (vc.value) EXPECT_EQ(*vc.value, 1.0);
  }
}

TEST(VideoConsistency, HalfMissedInOneFrame) {
  const auto g = square(8, 0, 0, 4);   // 16 pixels, constant over time
  const auto half = square(8, 0, 0, 4);
  auto missed = BinaryMask::zeros(8, 8);
  for (std::size_t y = 0; y < 2; ++y) {
    for (std::size_t x = 0; x < 4; ++x) missed.set(y * 8 + x, true);
  }
  // Frame 1 of every 3-frame window over 3 frames misses half the area.
  const MaskSequence gt{g, g, g};
  const MaskSequence pred{half, missed, half};
  const auto vc = video_consistency(pred, gt, 3);
  ASSERT_TRUE(vc.value);
  EXPECT_EQ(*vc.value, 0.5);
  EXPECT_EQ(vc.scored, 1u);
}

TEST(VideoConsistency, SkipsEmptyCommonArea) {
  const MaskSequence gt{square(4, 0, 0, 2), square(4, 2, 2, 2), square(4, 2, 2, 2)};
  const auto vc = video_consistency(gt, gt, 2);
  EXPECT_EQ(vc.skipped, 1u);
  EXPECT_EQ(vc.scored, 1u);
  const auto none = video_consistency(gt, gt, 3);
  EXPECT_FALSE(none.value.has_value());
  EXPECT_EQ(none.skipped, 1u);
}

TEST(VideoConsistency, Errors) {
  const MaskSequence two{square(4, 0, 0, 2), square(4, 0, 0, 2)};
  EXPECT_THROW(video_consistency(two, two, 3), InsufficientFramesError);
  EXPECT_THROW(video_consistency(two, two, 1), std::invalid_argument);
}

TEST(VideoConsistency, MatchesSetOracle) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    MaskSequence pred, gt;
    for (int t = 0; t < 8; ++t) {
      gt.push_back(random_mask(16, 16, 0.85, rng));
      pred.push_back(random_mask(16, 16, 0.85, rng));
    }
    for (std::size_t w : {2u, 3u, 5u}) {
      const auto vc = video_consistency(pred, gt, w);
      const auto ref = testing::vc_oracle(pred, gt, w);
      EXPECT_EQ(vc.scored, ref.scored);
      EXPECT_EQ(vc.skipped, ref.skipped);
      if (ref.scored > 0) {
        ASSERT_TRUE(vc.value);
        EXPECT_EQ(*vc.value, ref.sum / static_cast<double>(ref.scored));
      }
    }
  }
}

TEST(Boundary, FilledSquareKeepsItsRing) {
  const auto b = mask_boundary(square(8, 2, 2, 4));
  EXPECT_EQ(b.count(), 12u);
  EXPECT_EQ(b(3, 3), 0);
  EXPECT_EQ(b(2, 2), 1);
  // Pixels on the image border count as boundary.
  EXPECT_EQ(mask_boundary(square(3, 0, 0, 3)).count(), 8u);
}

TEST(Boundary, MatchesOracle) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto m = random_mask(12, 12, 0.6, rng);
    EXPECT_EQ(testing::pixels_of(mask_boundary(m)), testing::boundary_oracle(testing::pixels_of(m)));
  }
}

TEST(BoundaryF, Examples) {
  const auto a = square(8, 2, 2, 4);
  EXPECT_EQ(boundary_f(a, a), 1.0);
  EXPECT_EQ(boundary_f(a, BinaryMask::zeros(8, 8)), 0.0);
  EXPECT_EQ(boundary_f(BinaryMask::zeros(8, 8), BinaryMask::zeros(8, 8)), 1.0);
  EXPECT_EQ(default_boundary_tolerance(16, 16), 1.0);
  EXPECT_NEAR(default_boundary_tolerance(300, 400), 5.0, 1e-12);
}

TEST(BoundaryF, ShiftedSquare) {
  const auto a = square(8, 1, 1, 4);
  const auto b = square(8, 1, 2, 4);
  const double f = boundary_f(a, b, 1.0);
  EXPECT_EQ(f, testing::boundary_f_oracle(a, b, 1.0));
  EXPECT_GT(f, 0.0);
  EXPECT_LE(f, 1.0);
}

TEST(BoundaryF, MatchesOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> tol(0.5, 3.0);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_mask(16, 16, 0.5, rng);
    const auto b = random_mask(16, 16, 0.5, rng);
    const double t = tol(rng);
    EXPECT_EQ(boundary_f(a, b, t), testing::boundary_f_oracle(a, b, t));
  }
}

TEST(KshotStability, Examples) {
  const std::vector<double> ones{0.3, 0.7};
  EXPECT_NEAR(kshot_stability(0.4, ones), 0.3, 1e-15);
  EXPECT_EQ(kshot_stability(0.7, ones), 0.0);
  EXPECT_THROW(kshot_stability(0.4, std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(kshot_stability(1.4, ones), std::invalid_argument);
}

TEST(CenterBias, Examples) {
  const auto m = square(6, 1, 2, 3);
  const std::vector<BinaryMask> one{m};
  const Grid g = center_bias_map(one, 6, 6);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(g[i], m[i]);
  const std::vector<BinaryMask> pair{m, complement(m)};
  const Grid half = center_bias_map(pair, 6, 6);
  for (double v : half.values()) EXPECT_EQ(v, 0.5);
  EXPECT_THROW(center_bias_map(std::span<const BinaryMask>{}, 4, 4), std::invalid_argument);
}

TEST(CenterBias, MatchesAccumulationOracle) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> ext(3, 16);
  for (int i = 0; i < 100; ++i) {
    std::vector<BinaryMask> masks;
    for (int k = 0; k < 7; ++k) masks.push_back(random_mask(ext(rng), ext(rng), 0.4, rng));
    const std::size_t h = ext(rng), w = ext(rng);
    const Grid got = center_bias_map(masks, h, w);
    const Grid ref = testing::center_bias_oracle(masks, h, w);
    for (std::size_t p = 0; p < got.size(); ++p) EXPECT_EQ(got[p], ref[p]);
  }
}

TEST(Resample, IdentityAndUpscale) {
  std::mt19937_64 rng(7);
  const auto m = random_mask(5, 7, 0.5, rng);
  EXPECT_EQ(resample_nearest(m, 5, 7).values().size(), 35u);
  const auto same = resample_nearest(m, 5, 7);
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(same[i], m[i]);
  const auto up = resample_nearest(m, 10, 14);
  for (std::size_t y = 0; y < 10; ++y) {
    for (std::size_t x = 0; x < 14; ++x) EXPECT_EQ(up(y, x), m(y / 2, x / 2));
  }
}

TEST(EvaluateSequence, CollectsRequestedWindows) {
  std::mt19937_64 rng(8);
  MaskSequence pred, gt;
  for (int t = 0; t < 6; ++t) {
    gt.push_back(random_mask(8, 8, 0.9, rng));
    pred.push_back(random_mask(8, 8, 0.9, rng));
  }
  const std::vector<std::size_t> windows{3, 5};
  const auto r = evaluate_sequence(pred, gt, windows, true);
  EXPECT_EQ(r.miou, mean_iou(pred, gt));
  EXPECT_EQ(r.vc.size(), 2u);
  ASSERT_TRUE(r.boundary_f);
  EXPECT_GE(*r.boundary_f, 0.0);
  EXPECT_LE(*r.boundary_f, 1.0);
  EXPECT_FALSE(evaluate_sequence(pred, gt, windows, false).boundary_f.has_value());
}

}  // namespace
}  // namespace tti
