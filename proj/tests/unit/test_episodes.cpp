#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "tempdir.hpp"
#include "tti/episodes.hpp"
#include "tti/errors.hpp"
#include "tti/fts.hpp"
#include "tti/metrics.hpp"
#include "tti/numerics.hpp"
#include "tti/optimizer.hpp"
#include "tti/synthetic.hpp"

namespace tti {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

// Toy dataset: every feature column stores (video + 1, frame + 1, 1), so a
// loaded support shot reveals where it came from. Labels put `classes[0]`
// in the top-left quadrant and the others in the bottom row.
struct ToyVideo {
  std::string id;
  std::size_t frames;
  std::vector<int> classes;
};

DatasetManifest write_toy_dataset(const fs::path& root, const std::vector<ToyVideo>& videos,
                                  std::vector<Fold> folds) {
  DatasetManifest m;
  m.channels = 3;
  m.root = root;
  m.folds = std::move(folds);
  for (std::size_t v = 0; v < videos.size(); ++v) {
    VideoRecord rec;
    rec.id = videos[v].id;
    rec.frame_count = videos[v].frames;
    rec.classes = videos[v].classes;
    for (std::size_t f = 0; f < videos[v].frames; ++f) {
      std::vector<double> feat(3 * 16);
      for (std::size_t p = 0; p < 16; ++p) {
        feat[p] = static_cast<double>(v + 1);
        feat[16 + p] = static_cast<double>(f + 1);
        feat[32 + p] = 1.0;
      }
      std::vector<double> labels(16, 0.0);
      labels[0] = labels[1] = labels[4] = labels[5] = videos[v].classes[0];
      for (std::size_t k = 1; k < videos[v].classes.size(); ++k) labels[11 + k] = videos[v].classes[k];
      const auto feat_name = fs::path(rec.id) / ("f" + std::to_string(f) + ".fts");
      const auto mask_name = fs::path(rec.id) / ("m" + std::to_string(f) + ".fts");
      fs::create_directories(root / rec.id);
      fts::write_tensor(Tensor({3, 4, 4}, feat), root / feat_name);
      fts::write_tensor(Tensor({4, 4}, labels), root / mask_name);
      rec.features.push_back(feat_name);
      rec.masks.push_back(mask_name);
    }
    m.videos.push_back(rec);
  }
  save_manifest(m, root / "manifest.json");
  return load_manifest(root / "manifest.json");
}

std::vector<ToyVideo> standard_videos() {
  return {{"a", 6, {3}}, {"b", 5, {3, 7}}, {"c", 4, {3}}, {"d", 8, {7}}};
}

std::vector<Fold> standard_folds() { return {{{7}, {}, {3}}}; }

TEST(Manifest, SaveLoadRoundTrip) {
  TempDir tmp;
  const auto m = write_toy_dataset(tmp.path(), standard_videos(), standard_folds());
  EXPECT_EQ(m.videos.size(), 4u);
  EXPECT_EQ(m.videos[1].classes, (std::vector<int>{3, 7}));
  EXPECT_EQ(m.folds[0].test, (std::vector<int>{3}));
  EXPECT_EQ(m.channels, 3u);
  EXPECT_TRUE(fs::exists(m.resolve(m.videos[2].features[3])));
}

TEST(Manifest, RejectsOverlappingFolds) {
  TempDir tmp;
  auto m = write_toy_dataset(tmp.path(), standard_videos(), standard_folds());
  m.folds[0].train.push_back(3);
  EXPECT_THROW(validate_manifest(m), ConfigError);
}

TEST(Manifest, RejectsMissingFilesAndBadCounts) {
  TempDir tmp;
  auto m = write_toy_dataset(tmp.path(), standard_videos(), standard_folds());
  fs::remove(m.resolve(m.videos[0].masks[2]));
  EXPECT_THROW(validate_manifest(m), ConfigError);
  EXPECT_NO_THROW(validate_manifest(m, false));
  m.videos[0].frame_count = 99;
  EXPECT_THROW(validate_manifest(m, false), ConfigError);
  m = DatasetManifest{};
  m.format_version = 2;
  EXPECT_THROW(validate_manifest(m, false), ConfigError);
}

TEST(Manifest, RejectsMalformedJson) {
  TempDir tmp;
  std::ofstream(tmp.path() / "manifest.json") << R"({"format_version": 1, "videos": [{}]})";
  EXPECT_THROW(load_manifest(tmp.path() / "manifest.json"), ConfigError);
  std::ofstream(tmp.path() / "broken.json") << "{";
  EXPECT_THROW(load_manifest(tmp.path() / "broken.json"), ConfigError);
}

TEST(BinarizeLabels, OneWay) {
  const Tensor labels({2, 2}, {0, 3, 7, 3});
  const auto m = binarize_labels(labels, 3);
  EXPECT_EQ(m[1], 1);
  EXPECT_EQ(m[2], 0);
  EXPECT_EQ(m.count(), 2u);
}

TEST(SampleEpisode, SupportAndQueryVideosAreDisjoint) {
  TempDir tmp;
  const auto m = write_toy_dataset(tmp.path(), standard_videos(), standard_folds());
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto ep = sample_episode(m, 0, 3, 2, 4, seed);
    ASSERT_EQ(ep.query.size(), 4u);
    ASSERT_EQ(ep.support.size(), 2u);
    const double query_video = ep.query[0].at(0, 0);
    for (std::size_t t = 0; t < ep.query.size(); ++t) {
      EXPECT_EQ(ep.query[t].at(0, 0), query_video);
      if (t > 0) EXPECT_EQ(ep.query[t].at(1, 0), ep.query[t - 1].at(1, 0) + 1.0);
      EXPECT_EQ(ep.ground_truth[t].count(), 4u);
    }
    std::set<std::pair<double, double>> seen;
    for (const auto& shot : ep.support) {
      EXPECT_NE(shot.features.at(0, 0), query_video);
      EXPECT_GT(shot.mask.count(), 0u);
      EXPECT_TRUE(seen.insert({shot.features.at(0, 0), shot.features.at(1, 0)}).second)
          << "support drawn with replacement";
    }
    // Video d never contains class 3.
    for (const auto& shot : ep.support) EXPECT_NE(shot.features.at(0, 0), 4.0);
  }
}

TEST(SampleEpisode, Deterministic) {
  TempDir tmp;
  const auto m = write_toy_dataset(tmp.path(), standard_videos(), standard_folds());
  const auto a = sample_episode(m, 0, 3, 3, 2, 42);
  const auto b = sample_episode(m, 0, 3, 3, 2, 42);
  EXPECT_EQ(a.id, b.id);
  for (std::size_t k = 0; k < a.support.size(); ++k) {
    EXPECT_EQ(a.support[k].features.tensor(), b.support[k].features.tensor());
  }
}

TEST(SampleEpisode, SingleEligibleVideoCannotProvideSupport) {
  TempDir tmp;
  const auto m = write_toy_dataset(tmp.path(), {{"solo", 4, {3}}, {"other", 4, {7}}},
                                   standard_folds());
  EXPECT_THROW(sample_episode(m, 0, 3, 1, 2, 0), SamplingError);
}

TEST(SampleEpisode, ConstraintErrors) {
  TempDir tmp;
  const auto m = write_toy_dataset(tmp.path(), standard_videos(), standard_folds());
  EXPECT_THROW(sample_episode(m, 0, 7, 1, 2, 0), SamplingError);   // train class
  EXPECT_THROW(sample_episode(m, 1, 3, 1, 2, 0), SamplingError);   // no such fold
  EXPECT_THROW(sample_episode(m, 0, 3, 1, 20, 0), SamplingError);  // too few frames
  EXPECT_THROW(sample_episode(m, 0, 3, 0, 2, 0), SamplingError);
  EXPECT_THROW(sample_episode(m, 0, 3, 50, 2, 0), SamplingError);  // support pool too small
}

TEST(EpisodeSet, RoundTrip) {
  TempDir tmp;
  SyntheticSpec spec;
  spec.frames = 3;
  spec.height = 5;
  spec.width = 6;
  std::vector<Episode> eps;
  for (std::uint64_t s = 0; s < 3; ++s) {
    spec.seed = s;
    auto ep = generate_synthetic(spec);
    ep.id = "ep" + std::to_string(s);
    eps.push_back(ep);
  }
  write_episode_set(eps, tmp.path());
  const auto dirs = list_episode_set(tmp.path());
  ASSERT_EQ(dirs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto back = read_episode(dirs[i]);
    EXPECT_EQ(back.id, eps[i].id);
    EXPECT_EQ(back.seed, eps[i].seed);
    ASSERT_EQ(back.query.size(), eps[i].query.size());
    for (std::size_t t = 0; t < back.query.size(); ++t) {
      const auto& a = back.query[t].tensor();
      const auto& b = eps[i].query[t].tensor();
      for (std::size_t j = 0; j < a.size(); ++j) {
        EXPECT_EQ(a[j], static_cast<double>(static_cast<float>(b[j])));
      }
      EXPECT_EQ(back.ground_truth[t].values().size(), eps[i].ground_truth[t].values().size());
      for (std::size_t p = 0; p < back.ground_truth[t].size(); ++p) {
        EXPECT_EQ(back.ground_truth[t][p], eps[i].ground_truth[t][p]);
      }
    }
    EXPECT_EQ(back.support.size(), eps[i].support.size());
  }
}

TEST(EpisodeSet, RejectsForeignManifest) {
  TempDir tmp;
  std::ofstream(tmp.path() / "manifest.json") << R"({"format_version": 1, "videos": []})";
  EXPECT_THROW(list_episode_set(tmp.path()), ConfigError);
}

TEST(MaskTensor, RoundTripAndRejectsLabels) {
  const BinaryMask m(2, 2, {1, 0, 0, 1});
  const auto back = tensor_to_mask(mask_to_tensor(m));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(back[i], m[i]);
  EXPECT_THROW(tensor_to_mask(Tensor({2, 2}, {0, 2, 0, 0})), std::invalid_argument);
}

// ---- synthetic generator -----------------------------------------------------------

TEST(Synthetic, DegenerateGeneratorHasIdenticalForeground) {
  SyntheticSpec spec;
  spec.drift = 0.0;
  spec.noise = 0.0;
  spec.seed = 3;
  const auto ep = generate_synthetic(spec);
  std::vector<double> ref;
  for (std::size_t t = 0; t < ep.query.size(); ++t) {
    const auto f = normalize_features(ep.query[t]);
    for (std::size_t p = 0; p < f.pixels(); ++p) {
      if (ep.ground_truth[t][p] == 0) continue;
      const auto col = f.column(p);
      if (ref.empty()) ref = col;
      for (std::size_t c = 0; c < col.size(); ++c) EXPECT_NEAR(col[c], ref[c], 1e-12);
    }
  }
  SupportSet support;
  for (const auto& s : ep.support) support.push_back({normalize_features(s.features), s.mask});
  EXPECT_NEAR(cosine_similarity(imprint_weights(support), ref), 1.0, 1e-12);
}

TEST(Synthetic, ExactAreaFraction) {
  SyntheticSpec spec;
  spec.height = 8;
  spec.width = 8;
  spec.area_fractions = {0.5};
  for (std::uint64_t s = 0; s < 20; ++s) {
    spec.seed = s;
    for (const auto& g : generate_synthetic(spec).ground_truth) {
      EXPECT_GE(g.count(), 24u);
      EXPECT_LE(g.count(), 40u);
    }
  }
}

TEST(Synthetic, SeedsChangeMasksNotStatistics) {
  SyntheticSpec spec;
  spec.area_fraction_range = std::make_pair(0.1, 0.6);
  double mean_a = 0.0, mean_b = 0.0;
  bool any_different = false;
  for (std::uint64_t s = 0; s < 50; ++s) {
    spec.seed = 2 * s;
    const auto a = generate_synthetic(spec);
    spec.seed = 2 * s + 1;
    const auto b = generate_synthetic(spec);
    for (std::size_t t = 0; t < a.ground_truth.size(); ++t) {
      mean_a += static_cast<double>(a.ground_truth[t].count()) / 256.0;
      mean_b += static_cast<double>(b.ground_truth[t].count()) / 256.0;
      for (std::size_t p = 0; p < 256 && !any_different; ++p) {
        any_different = a.ground_truth[t][p] != b.ground_truth[t][p];
      }
    }
  }
  EXPECT_TRUE(any_different);
  const double n = 50.0 * static_cast<double>(spec.frames);
  EXPECT_NEAR(mean_a / n, mean_b / n, 0.05);
  EXPECT_NEAR(mean_a / n, 0.35, 0.05);
}

TEST(Synthetic, Deterministic) {
  SyntheticSpec spec;
  spec.drift = 0.05;
  spec.seed = 9;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  for (std::size_t t = 0; t < a.query.size(); ++t) {
    EXPECT_EQ(a.query[t].tensor(), b.query[t].tensor());
  }
}

TEST(Synthetic, BlobMaskHasExactCount) {
  for (std::size_t count : {1u, 7u, 20u, 64u}) {
    EXPECT_EQ(blob_mask(8, 8, 3.5, 2.0, 1.5, count).count(), count);
  }
}

TEST(Synthetic, ValidationRejectsBadSpecs) {
  SyntheticSpec spec;
  spec.area_fractions = {1.2};
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = SyntheticSpec{};
  spec.channels = 3;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = SyntheticSpec{};
  spec.direction = {1.0};
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Synthetic, StaticEpisodesAreSolvedByBaseline) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    SyntheticSpec spec;
    spec.seed = s;
    const auto ep = generate_synthetic(spec);
    TtiConfig cfg;
    cfg.mode = Mode::kBaseline;
    const auto r = run_episode(ep, cfg);
    EXPECT_GE(mean_iou(r.masks, ep.ground_truth), 0.95) << "seed " << s;
  }
}

}  // namespace
}  // namespace tti
