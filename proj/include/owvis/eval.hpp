#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "owvis/data_model.hpp"

namespace owvis {

struct EvalConfig {
  /// 0.50:0.05:0.95, built from integer percents so 0.9 is exactly 90/100.
  std::vector<double> iou_thresholds = default_thresholds();
  int max_dets_ap = 100;
  int max_dets_ar = 1;

  static std::vector<double> default_thresholds();
  void validate() const;
};

/// Sum of per-frame intersections over sum of per-frame unions. Two tracks
/// that are empty on every frame score 0.
double st_iou(const InstanceTrack& a, const InstanceTrack& b);

struct ClassMetrics {
  double ap = 0.0;    // averaged over IoU thresholds
  double ap50 = 0.0;  // at the 0.5 threshold
  double ar1 = 0.0;   // recall with one detection per video, averaged over thresholds
  std::size_t num_gt = 0;
  std::size_t num_pred = 0;
};

/// Single-class evaluation; every prediction and ground truth is taken to be
/// of the same class.
ClassMetrics evaluate_class(const std::vector<InstanceTrack>& preds, const std::vector<InstanceTrack>& gts,
                            const EvalConfig& config);

struct KnownMetrics {
  std::map<CategoryId, ClassMetrics> per_class;  // classes with at least one gt
  double mean_ap = 0.0;
  double mean_ap50 = 0.0;
  double mean_ar1 = 0.0;
};

KnownMetrics evaluate_known(const std::vector<InstanceTrack>& preds, const std::vector<InstanceTrack>& gts,
                            const ClassRegistry& registry, const EvalConfig& config);

/// Class-agnostic evaluation of category-0 predictions against future-class
/// tracks. Unknown predictions that land on known objects are false positives.
ClassMetrics evaluate_unknown(const std::vector<InstanceTrack>& preds, const std::vector<InstanceTrack>& gts_future,
                              const EvalConfig& config);

struct ReportSection {
  std::string name;
  double ap = 0.0;
  double ap50 = 0.0;
  double ar1 = 0.0;
  std::map<CategoryId, ClassMetrics> per_class;
};

struct EvalReport {
  int task = 1;
  std::string fingerprint;
  std::vector<ReportSection> sections;

  const ReportSection* section(const std::string& name) const;
  nlohmann::json to_json() const;
  /// Fixed-width table, metrics x100.
  std::string to_table() const;
};

/// Task 1: Known and Unknown. Later tasks: Previously Known, Current Known and
/// Both, where `registry_history[t - 1]` lists the classes known at task t.
EvalReport build_report(int task, const KnownMetrics& known, const std::optional<ClassMetrics>& unknown,
                        const std::vector<std::vector<CategoryId>>& registry_history);

/// Box-shaped random unknown proposals, the chance-level reference for
/// unknown recall.
std::vector<InstanceTrack> random_proposals(const Dataset& dataset, const std::vector<VideoId>& videos,
                                            int per_video, std::uint64_t seed);

}  // namespace owvis
