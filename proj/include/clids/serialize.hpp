#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "clids/model.hpp"

// Binary weights format, all integers little-endian:
//
//   "CLIDS" | version u8 (0x01)
//   per tensor, in ModelGraph::parameters() order:
//     name length u16 | UTF-8 name | rank u8 | dims u32 x rank | float32 x size
//   checksum u64 = sum of every preceding byte, mod 2^64
//
// Running BatchNorm statistics are stored like any other tensor.

namespace clids {

inline constexpr std::uint8_t kWeightsVersion = 0x01;

std::vector<std::uint8_t> encode_weights(const ModelGraph<float>& model);

/// Fills `model` (built from the matching config) from `bytes`. Throws
/// CorruptFile on bad magic, version, checksum, names or shapes.
void decode_weights(std::span<const std::uint8_t> bytes, ModelGraph<float>& model);

std::uint64_t byte_checksum(std::span<const std::uint8_t> bytes) noexcept;

void save_weights(const ModelGraph<float>& model, const std::filesystem::path& path);
void load_weights(const std::filesystem::path& path, ModelGraph<float>& model);

}  // namespace clids
