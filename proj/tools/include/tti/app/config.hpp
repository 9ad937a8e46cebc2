#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tti/optimizer.hpp"
#include "tti/synthetic.hpp"

namespace tti::app {

enum class SourceKind { kSynthetic, kManifest, kEpisodeSet };

/// Where cmd_run gets its episodes.
struct EpisodeSource {
  SourceKind kind = SourceKind::kSynthetic;
  SyntheticSpec synthetic;         // kSynthetic
  std::filesystem::path path;      // kManifest: manifest file; kEpisodeSet: directory
  std::size_t fold = 0;            // kManifest
  std::size_t shots = 5;           // kManifest
  std::size_t frames = 8;          // kManifest
};

struct RunConfig {
  TtiConfig tti;
  EpisodeSource source;
  std::filesystem::path output;
  std::size_t runs = 1;
  std::size_t episodes = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> metrics{"miou", "vc"};
  std::vector<std::size_t> windows{3};
  std::size_t workers = 1;

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
};

/// Parses a run configuration. Relative paths resolve against the config
/// file's directory. Unknown keys are rejected.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir);

SyntheticSpec parse_synthetic_spec(const std::string& json_text);
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

/// Episode seed for episode `index` of run `run`, mixed from the base seed.
std::uint64_t episode_seed(std::uint64_t base, std::size_t run, std::size_t index);

}  // namespace tti::app
