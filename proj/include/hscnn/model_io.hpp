#pragma once

#include "hscnn/network.hpp"

#include <optional>
#include <string>

namespace hscnn {

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Model file layout:
///   "HSCNNMDL" | u32 version | u32 length + canonical config text (plus
///   `seed=`) | u32 tensor count | per tensor: u32 length + name, u64 count,
///   count little-endian f32 | u32 CRC-32 of every byte after the version.
void save_model(const Model<float>& model, const std::string& path);

/// Throws DataError on bad magic, version mismatch, truncation, checksum
/// failure, or (when `expected` is given) a variant mismatch.
Model<float> load_model(const std::string& path, std::optional<Variant> expected = std::nullopt);

} // namespace hscnn
