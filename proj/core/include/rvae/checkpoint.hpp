#pragma once

// Binary checkpoint container (little-endian throughout):
//
//   offset  size  field
//   0       4     magic "RVAE"
//   4       4     u32 format version (kCheckpointVersion)
//   8       4     u32 tensor count (VaeParams::kTensorCount)
//   12      4     u32 reserved, zero
//   16      8·T   shape table: (u32 rows, u32 cols) per tensor
//   ...           f64 payload, tensors in VaeParams declaration order
//
// See docs/checkpoint_format.md.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rvae/vae_model.hpp"

namespace rvae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const VaeParams& params);
VaeParams deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const VaeParams& params, const std::filesystem::path& path);

/// Loads a checkpoint. When `expected` is given, a shape mismatch raises a
/// DimensionError listing both shape tables.
VaeParams load_checkpoint(const std::filesystem::path& path,
                          const std::optional<VaeShape>& expected = std::nullopt);

}  // namespace rvae
