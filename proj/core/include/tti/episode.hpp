#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tti/classifier.hpp"

namespace tti {

/// One few-shot task: K labelled support shots defining a single class and
/// N_v consecutive query frames, with optional per-frame ground truth.
struct Episode {
  std::string id;
  int class_id = 0;
  std::uint64_t seed = 0;
  SupportSet support;
  FeatureSequence query;
  std::vector<BinaryMask> ground_truth;  // empty when unavailable

  bool has_ground_truth() const noexcept { return !ground_truth.empty(); }
};

}  // namespace tti
