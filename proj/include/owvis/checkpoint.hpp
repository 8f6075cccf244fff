#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "owvis/config.hpp"
#include "owvis/model.hpp"

namespace owvis {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint32_t version = kCheckpointVersion;
  RunConfig config;
  std::string fingerprint;
  int task = 1;
  ClassRegistry registry;
  /// Known ids after each completed task.
  std::vector<std::vector<CategoryId>> registry_history;
};

/// File layout: "OWVISCKP", u32 version, u32 header length, JSON header, u64
/// tensor count, then per tensor: u32 name length, name, u8 dtype (0 f32,
/// 1 f64), u32 rank, i64 dims, u64 byte count, raw little-endian data.
void save_checkpoint(OwVisModel& model, const CheckpointInfo& info, const std::filesystem::path& path);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Rebuilds the model described by the header and fills every tensor.
OwVisModel load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

/// Copies only the "backbone.*" tensors of a checkpoint into `model`. Returns
/// the number of tensors copied.
int load_backbone_weights(OwVisModel& model, const std::filesystem::path& path);

}  // namespace owvis
