#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tti/numerics.hpp"

namespace tti::fts {

// Layout (all integers little-endian):
//   "FTS1" | dtype u8 | ndim u8 | ndim x u32 extents | row-major payload
// dtype 1 is IEEE-754 binary32. Reading widens to double; writing narrows.

inline constexpr std::uint8_t kFloat32 = 1;

std::vector<std::uint8_t> encode(const Tensor& tensor);

/// Throws FormatError (with the failing byte offset) on a bad magic, unknown
/// dtype, zero rank or extent, truncation, trailing bytes or non-finite
/// values.
Tensor decode(std::span<const std::uint8_t> bytes);

/// Writes through a temporary file renamed into place.
void write_tensor(const Tensor& tensor, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

}  // namespace tti::fts
