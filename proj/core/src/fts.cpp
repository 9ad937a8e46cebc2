#include "tti/fts.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

#include "tti/errors.hpp"

namespace tti::fts {
namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'T', 'S', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode(const Tensor& tensor) {
  if (tensor.rank() == 0 || tensor.rank() > 255) {
    throw std::invalid_argument("fts::encode: rank must be in [1, 255]");
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kFloat32);
  out.push_back(static_cast<std::uint8_t>(tensor.rank()));
  for (std::size_t d : tensor.dims()) {
    if (d > UINT32_MAX) throw std::invalid_argument("fts::encode: extent exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + 4 * tensor.size());
  for (double v : tensor.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Tensor decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError("truncated magic", bytes.size());
  for (std::size_t i = 0; i < 4; ++i) {
    if (bytes[i] != kMagic[i]) throw FormatError("bad magic, expected FTS1", i);
  }
  if (bytes.size() < 6) throw FormatError("truncated header", bytes.size());
  if (bytes[4] != kFloat32) {
    throw FormatError("unsupported dtype code " + std::to_string(bytes[4]), 4);
  }
  const std::size_t rank = bytes[5];
  if (rank == 0) throw FormatError("rank must be at least 1", 5);

  std::size_t at = 6;
  std::vector<std::size_t> dims(rank);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    if (at + 4 > bytes.size()) {
      throw FormatError("header declares " + std::to_string(rank) + " dims but only " +
                            std::to_string(i) + " present",
                        at);
    }
    dims[i] = get_u32(bytes, at);
    if (dims[i] == 0) throw FormatError("zero extent", at);
    if (count > bytes.size() / dims[i]) throw FormatError("payload truncated", bytes.size());
    count *= dims[i];
    at += 4;
  }
  if (bytes.size() - at < 4 * count) {
    throw FormatError("payload truncated: need " + std::to_string(4 * count) + " bytes", bytes.size());
  }
  if (bytes.size() - at > 4 * count) throw FormatError("trailing bytes after payload", at + 4 * count);

  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i, at += 4) {
    const float f = std::bit_cast<float>(get_u32(bytes, at));
    if (!std::isfinite(f)) throw FormatError("non-finite value", at);
    data[i] = static_cast<double>(f);
  }
  return Tensor(std::move(dims), std::move(data));
}

void write_tensor(const Tensor& tensor, const std::filesystem::path& path) {
  const auto bytes = encode(tensor);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace tti::fts
