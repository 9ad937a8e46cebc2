#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tti/classifier.hpp"
#include "tti/episode.hpp"

namespace tti {

inline constexpr int kManifestVersion = 1;

struct VideoRecord {
  std::string id;
  std::size_t frame_count = 0;
  std::vector<std::filesystem::path> features;  // [C, H, W] per frame
  std::vector<std::filesystem::path> masks;     // [H, W] class-id labels per frame
  std::vector<int> classes;                     // class ids present in the video

  bool contains(int class_id) const;
};

struct Fold {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

/// Dataset manifest. File paths are stored relative to `root`, the
/// directory holding the manifest file.
struct DatasetManifest {
  int format_version = kManifestVersion;
  std::size_t channels = 0;  // 0 when unrecorded
  std::vector<VideoRecord> videos;
  std::vector<Fold> folds;
  std::filesystem::path root;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Checks structural invariants: version, per-video file counts, disjoint
/// train/test classes and, when `check_files`, that every referenced file
/// exists. Throws ConfigError.
void validate_manifest(const DatasetManifest& manifest, bool check_files = true);

/// Parses and validates a manifest file.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// One-way mask: 1 where the label tensor equals `class_id`.
BinaryMask binarize_labels(const Tensor& labels, int class_id);

/// Samples one episode: N_v consecutive query frames from one video
/// containing the class, and K support frames drawn without replacement
/// from other videos whose masks contain the class. Deterministic in
/// `seed`. Throws SamplingError naming the violated constraint.
Episode sample_episode(const DatasetManifest& manifest, std::size_t fold, int class_id,
                       std::size_t shots, std::size_t frames, std::uint64_t seed);

// Materialized episode sets: a directory holding manifest.json (the list of
// episode directories) and one directory per episode with episode.json plus
// FTS files for support features/masks, query features and ground truth.

void write_episode(const Episode& episode, const std::filesystem::path& dir);
Episode read_episode(const std::filesystem::path& dir);

void write_episode_set(const std::vector<Episode>& episodes, const std::filesystem::path& dir);
/// Episode directory paths listed by an episode-set manifest.
std::vector<std::filesystem::path> list_episode_set(const std::filesystem::path& dir);

Tensor mask_to_tensor(const BinaryMask& mask);
BinaryMask tensor_to_mask(const Tensor& tensor);

}  // namespace tti
