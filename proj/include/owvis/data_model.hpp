#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "owvis/geometry.hpp"

namespace owvis {

using VideoId = std::int64_t;
using CategoryId = int;

/// Label reserved for objects outside the known set.
inline constexpr CategoryId kUnknownCategory = 0;

struct Category {
  CategoryId id = 0;
  std::string name;
  std::string supercategory;
};

/// Source description of a video: frame files relative to the dataset's image
/// root plus the working resolution. When the stored resolution is not a
/// multiple of 16 the working resolution is the center-padded one and
/// `source_height`/`source_width` keep the original.
struct VideoInfo {
  VideoId id = 0;
  int height = 0;
  int width = 0;
  int source_height = 0;
  int source_width = 0;
  std::vector<std::string> file_names;

  int length() const { return static_cast<int>(file_names.size()); }
};

/// One object's masks and boxes over a run of frames. Ground truth carries
/// score 1; predictions carry a confidence.
struct InstanceTrack {
  std::int64_t id = 0;
  VideoId video_id = 0;
  CategoryId category_id = kUnknownCategory;
  std::vector<Mask> masks;
  std::vector<Box> boxes;
  double score = 1.0;

  int frame_count() const { return static_cast<int>(masks.size()); }
};

/// Planar RGB frame, values in [0, 1], layout 3 x H x W.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(3) * h * w, 0.0f) {}
  float& at(int ch, int r, int c) { return data[(static_cast<std::size_t>(ch) * height + r) * width + c]; }
  float at(int ch, int r, int c) const { return data[(static_cast<std::size_t>(ch) * height + r) * width + c]; }
};

/// M consecutive frames of one video, the unit of model input.
struct VideoClip {
  VideoId video_id = 0;
  std::vector<int> frame_indices;
  std::vector<RgbImage> frames;

  int frame_count() const { return static_cast<int>(frames.size()); }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
};

/// Decoded frames per video.
using FrameTable = std::map<VideoId, std::vector<RgbImage>>;

/// Videos, their annotation tracks and the category table. Treated as
/// immutable once built.
struct Dataset {
  std::map<VideoId, VideoInfo> videos;
  std::map<VideoId, std::vector<InstanceTrack>> annotations;
  std::map<CategoryId, Category> categories;
  std::filesystem::path image_root;

  std::size_t track_count() const;
  /// Throws ValidationError on the first broken invariant.
  void validate() const;
};

/// The ordered set of currently known categories. Logit column j + 1 of the
/// class-specific head belongs to known_ids[j]; column 0 is "unknown".
class ClassRegistry {
 public:
  ClassRegistry() = default;
  explicit ClassRegistry(std::vector<CategoryId> known_ids);

  const std::vector<CategoryId>& known_ids() const { return known_ids_; }
  int num_known() const { return static_cast<int>(known_ids_.size()); }
  bool is_known(CategoryId id) const;
  /// Logit column for a known category, or -1.
  int column_of(CategoryId id) const;
  CategoryId category_at(int column) const;

  /// Returns a registry with the new ids appended in order. Ids already known
  /// are skipped.
  ClassRegistry extended(const std::vector<CategoryId>& new_ids) const;
  bool contains_all(const ClassRegistry& other) const;

  friend bool operator==(const ClassRegistry&, const ClassRegistry&) = default;

 private:
  std::vector<CategoryId> known_ids_;
};

/// Copies frames [start, start + count) of a video into a clip.
VideoClip make_clip(VideoId video_id, const std::vector<RgbImage>& frames, int start, int count);

/// Restricts a track to frames [start, start + count).
InstanceTrack slice_track(const InstanceTrack& track, int start, int count);

}  // namespace owvis
