#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tti/losses.hpp"

namespace tti::app {

struct GradcheckSizes {
  std::size_t channels = 8;
  std::size_t height = 6;
  std::size_t width = 6;
  std::size_t frames = 4;
  std::size_t shots = 2;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 20;
  GradcheckSizes sizes;
  double tolerance = 1e-4;
  double step = 1e-5;
  double contrastive_temperature = 0.1;
  /// Loss name whose analytic gradient is sign-flipped (negative control).
  std::string inject_fault;
};

/// Worst coordinate found for one loss. For the contrastive row the error is
/// the value discrepancy against a direct loop evaluation.
struct GradcheckRow {
  std::string loss;
  double max_relative_error = 0.0;
  std::size_t instance = 0;
  std::size_t coordinate = 0;
  std::size_t checked = 0;  // coordinates compared (non-negligible ones)
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GradcheckRow> gradients;  // ce, entropy, kl, global, combined
  GradcheckRow contrastive_value;
  bool passed() const;
};

/// A random problem with every input the losses need.
struct GradcheckInstance {
  FeatureSequence query;  // normalized
  SupportSet support;     // normalized
  ClassifierBank bank;
  std::vector<LabelMarginal> priors;
  Lambdas lambdas;
};

GradcheckInstance random_instance(const GradcheckSizes& sizes, std::uint64_t seed);

/// |a - n| / max(|a|, |n|); coordinates where both are below 1e-8 are skipped
/// and reported as 0.
double relative_error(double analytic, double numeric);

GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace tti::app
