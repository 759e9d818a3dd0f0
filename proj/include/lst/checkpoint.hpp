#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "lst/parameter.hpp"

namespace lst {

// Binary parameter file, little-endian:
//   "LSTCKPT\0" | u32 version | u32 count |
//   count x { u32 name_len | name | u8 dtype | u32 rank | i64 dims[rank] | raw values }
// Entries are sorted by name, so the same parameters always produce the same bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

using TensorMap = std::map<std::string, Tensor>;

void write_checkpoint(const std::filesystem::path& path, const ParamList& params);
void write_checkpoint(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap read_checkpoint(const std::filesystem::path& path);

/// Copies values into params by name. Missing names or shape/dtype mismatches
/// raise WiringError; unknown names in the file are ignored unless strict.
void load_into(const TensorMap& tensors, const ParamList& params, bool strict = false);

}  // namespace lst
