#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "owvis/checkpoint.hpp"
#include "owvis/config.hpp"
#include "owvis/data_model.hpp"
#include "owvis/eval.hpp"
#include "owvis/losses.hpp"
#include "owvis/model.hpp"
#include "owvis/splits.hpp"
#include "owvis/sto.hpp"

namespace owvis {

/// Seeds torch and, in deterministic mode, pins torch to one thread.
void seed_everything(std::uint64_t seed, bool deterministic);

struct StepMetrics {
  std::string phase;
  std::int64_t step = 0;
  double L_c = 0, L_f = 0, L_r_box = 0, L_r_mask = 0, L_contr = 0, total = 0;

  nlohmann::json to_json() const;
};

using MetricsSink = std::function<void(const StepMetrics&)>;

/// A training clip: a video and a fixed start frame, or -1 for a fresh
/// seeded random start every epoch.
struct ClipSource {
  VideoId video = 0;
  int start = -1;

  friend bool operator==(const ClipSource&, const ClipSource&) = default;
};

struct TrainData {
  const Dataset* dataset = nullptr;
  const FrameTable* frames = nullptr;
  std::vector<ClipSource> sources;
};

std::vector<ClipSource> video_sources(const std::vector<VideoId>& videos);

/// Known-category tracks of frames [start, start + count) as loss targets.
/// Tracks of other categories and tracks absent from the whole window are
/// left out.
std::vector<TargetInstance> clip_targets(const Dataset& dataset, VideoId video, int start, int count,
                                         const ClassRegistry& registry);

struct ClipLoss {
  LossBundle bundle;
  torch::Tensor total;
  MatchResult match;
  QueryPartition partition;
  torch::Tensor scores;  // per-query objectness scores used for pseudo-labels
};

/// Matching, pseudo-unknown selection and every loss term for one clip.
ClipLoss clip_loss(OwVisModel& model, const ForwardOutput& out, const std::vector<TargetInstance>& targets,
                   const RunConfig& config);

struct TrainOptions {
  std::string phase = "task1";
  int epochs = 1;
  std::uint64_t seed = 0;
  std::int64_t max_steps = -1;  // stop early after this many steps when >= 0
  std::int64_t first_step = 0;  // step counter offset for the metrics log
  /// Written with the model state when a loss turns non-finite.
  std::filesystem::path divergence_checkpoint;
  CheckpointInfo checkpoint_info;
};

struct TrainResult {
  std::vector<StepMetrics> steps;
};

/// AdamW over all trainable parameters with gradient-norm clipping, one step
/// per clip. The clip order is a seeded shuffle per epoch.
TrainResult train_task(OwVisModel& model, const TrainData& data, const RunConfig& config, const TrainOptions& options,
                       const MetricsSink& sink = {});

struct ExemplarStore {
  std::uint64_t seed = 0;
  std::map<CategoryId, std::vector<ClipSource>> entries;

  bool empty() const;
  /// Every stored clip once, in category then sample order.
  std::vector<ClipSource> clips() const;
  nlohmann::json to_json() const;
};

/// Seeded sample of up to `e` clips per known category from `videos`. A
/// category without any clip gets an empty entry and a warning.
ExemplarStore select_exemplars(const Dataset& dataset, const std::vector<VideoId>& videos,
                               const ClassRegistry& registry, int e, int clip_frames, std::uint64_t seed);

/// Extends the classifier to `registry_new`, trains on the Task-2 data and,
/// when replay is on and the store is not empty, finetunes on the Task-2 data
/// plus the exemplar clips.
TrainResult incremental_step(OwVisModel& model, const ClassRegistry& registry_new, const TrainData& task2,
                             const ExemplarStore& exemplars, const RunConfig& config, const TrainOptions& options,
                             const MetricsSink& sink = {});

/// A trained model plus what it knows about its history. The exemplar store is
/// the replay sample drawn for the most recent incremental step.
struct Session {
  OwVisModel model{nullptr};
  CheckpointInfo info;
  ExemplarStore exemplars;
};

/// Builds a fresh model for the split's first task and trains it on that
/// task's training videos.
Session run_first_task(const RunConfig& config, const Dataset& dataset, const FrameTable& frames,
                       const TaskSplit& split, const MetricsSink& sink = {});

/// Advances `session` by one task: samples exemplars from the previous task's
/// training videos, extends the classifier and trains incrementally.
void run_next_task(Session& session, const Dataset& dataset, const FrameTable& frames, const TaskSplit& split,
                   const MetricsSink& sink = {});

struct Detection {
  int query = 0;
  CategoryId category = kUnknownCategory;
  double score = 0.0;
};

struct Selection {
  std::vector<Detection> known;
  std::vector<Detection> unknown;
};

/// Top-k queries by best known-class probability, then top-k of the rest by
/// unknown probability, both filtered by score >= tau.
Selection inference_select(const torch::Tensor& class_logits, const ClassRegistry& registry, int k, double tau);

/// Runs the model on a whole video and returns its known and unknown tracks
/// with masks at the video's working resolution.
std::vector<InstanceTrack> predict_video(OwVisModel& model, const VideoInfo& video, const std::vector<RgbImage>& frames,
                                         const ProtocolConfig& config);

std::vector<InstanceTrack> predict_videos(OwVisModel& model, const Dataset& dataset, const FrameTable& frames,
                                          const std::vector<VideoId>& videos, const ProtocolConfig& config);

/// Known evaluation on the task's known-test videos and, when later tasks
/// exist, unknown evaluation of category-0 predictions on its unknown-test
/// videos against the not-yet-known tracks.
struct TaskEvaluation {
  KnownMetrics known;
  std::optional<ClassMetrics> unknown;
  EvalReport report;
};

TaskEvaluation evaluate_task(const Dataset& dataset, const TaskSplit& split, int task,
                             const std::vector<InstanceTrack>& predictions,
                             const std::vector<std::vector<CategoryId>>& registry_history,
                             const EvalConfig& config = {});

/// Videos a task is evaluated on (known-test then unknown-test).
std::vector<VideoId> evaluation_videos(const TaskSplit& split, int task);

/// Ground-truth tracks of categories outside `registry` in `videos`.
std::vector<InstanceTrack> future_tracks(const Dataset& dataset, const std::vector<VideoId>& videos,
                                         const ClassRegistry& registry);

struct SeparationResult {
  double foreground_mean = 0.0;
  double background_mean = 0.0;
  std::size_t foreground_boxes = 0;
  double margin() const { return foreground_mean - background_mean; }
};

/// Mean box score over ground-truth tracks minus the mean over size-matched
/// random boxes that overlap no object, on the first clip of each video.
/// `use_backbone` scores the channel mean of the backbone 1/16 map instead of
/// the learned objectness map.
SeparationResult measure_separation(OwVisModel& model, const Dataset& dataset, const FrameTable& frames,
                                    const std::vector<VideoId>& videos, bool use_backbone, std::uint64_t seed);

}  // namespace owvis
