#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "owvis/data_model.hpp"

namespace owvis {

/// Two-task partition recipe. A group name covers a category when it equals
/// the category's supercategory or is its base name, so "Animals" covers
/// "Animals (wild)".
struct SplitConfig {
  std::string split_name;
  std::vector<std::string> task1_supercats;
  std::vector<std::string> task2_supercats;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  static SplitConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Splits A-E over the YouTube-VIS super-category names.
std::vector<SplitConfig> default_split_configs();

struct TaskPartition {
  std::vector<CategoryId> known_category_ids;  // cumulative over tasks <= t
  std::vector<VideoId> train_videos;           // this task's own training videos
  std::vector<VideoId> known_test_videos;      // test videos of tasks <= t
  std::vector<VideoId> unknown_test_videos;    // test videos of tasks > t
};

struct TaskSplit {
  std::string split_name;
  std::uint64_t seed = 0;
  std::vector<TaskPartition> tasks;

  /// Categories first known at `task` (1-based).
  std::vector<CategoryId> new_categories(int task) const;
  /// Test videos carved out of `task`'s own videos.
  std::vector<VideoId> own_test_videos(int task) const;
  const TaskPartition& task(int t) const { return tasks.at(static_cast<std::size_t>(t - 1)); }

  nlohmann::json to_json() const;
  static TaskSplit from_json(const nlohmann::json& j);
  /// Canonical serialized form (stable key order, no whitespace).
  std::string serialize() const;
};

bool supercategory_covers(const std::string& group, const std::string& supercategory);

TaskSplit build_split(const Dataset& dataset, const SplitConfig& config);

struct SplitReportEntry {
  std::string kind;
  int task = 0;
  VideoId video_id = 0;
  std::int64_t instance_id = -1;
  std::string detail;
};

struct SplitReport {
  std::vector<SplitReportEntry> violations;
  /// Train-video instances of not-yet-known categories, excluded from supervision.
  std::vector<SplitReportEntry> suppressed;

  bool ok() const { return violations.empty(); }
  nlohmann::json to_json() const;
};

SplitReport validate_split(const TaskSplit& split, const Dataset& dataset);

struct PartitionCount {
  std::size_t videos = 0;
  std::size_t instances = 0;
};

struct TaskStats {
  int task = 0;
  PartitionCount train;
  PartitionCount test;  // own carve-out
  PartitionCount known_test;
  PartitionCount unknown_test;
};

std::vector<TaskStats> split_stats(const TaskSplit& split, const Dataset& dataset);
nlohmann::json split_stats_to_json(const std::vector<TaskStats>& stats);

}  // namespace owvis
