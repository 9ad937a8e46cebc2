#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tti {

// Argument and precondition violations use std::invalid_argument. The types
// below mark recoverable domain conditions that callers are expected to catch.

/// A support mask has no positive pixel, so no prototype can be pooled.
class EmptySupportMaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mask that must contain foreground (distance transform source,
/// pseudo-label positives) is empty.
class EmptyForegroundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every foreground signature is the zero-sentinel; no keyframe exists.
class NoKeyframeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The optimization produced a NaN or infinite loss.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, int iteration)
      : std::runtime_error(what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

class InsufficientFramesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed FTS tensor file. `offset` is the byte position where decoding
/// failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Episode sampling could not satisfy a protocol constraint.
class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or manifest content.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tti
