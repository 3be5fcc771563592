#pragma once

// Checkpoint container:
//   "VLCK" | u32 version | u64 config length | config JSON (UTF-8)
//   u32 tensor count | per tensor: u32 name length, name, u8 dtype, u32 rank,
//   rank x u32 dims, u64 payload offset
//   payload: little-endian float64 tensors, back to back
// Parameters are stored under their own names, Adam moments under
// "adam.m/<name>" and "adam.v/<name>".

#include <filesystem>
#include <string>

#include "vlsa/trainer.hpp"

namespace vlsa {

constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
// Throws IoError naming the path on missing files, bad magic or version,
// and missing or mis-shaped tensors.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Hex FNV-1a hash of the checkpoint file bytes.
std::string checkpoint_id(const std::filesystem::path& path);

nlohmann::json checkpoint_config(const Checkpoint& ck);

}  // namespace vlsa
