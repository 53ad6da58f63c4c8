#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "protoattend/config.hpp"
#include "protoattend/model.hpp"

namespace protoattend {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  ModelParameters params;
  std::uint64_t fingerprint = 0;
};

/// Binary layout, little-endian throughout:
///   "PATD" | u32 version | u32 config length | config text
///   | u32 tensor count | per tensor: u32 name length, name, u32 rank,
///     u64 dims..., f64 payload | u64 parameter fingerprint
/// Written to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const ModelParameters& params, const RunConfig& config);

/// Rejects wrong magic (including byte-swapped files), unknown versions,
/// tensors that disagree with the stored model config, trailing bytes and
/// fingerprint mismatches with FormatError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace protoattend
