#include "owvis/data_model.hpp"

#include <algorithm>
#include <set>

#include "owvis/error.hpp"

namespace owvis {

std::size_t Dataset::track_count() const {
  std::size_t n = 0;
  for (const auto& [vid, tracks] : annotations) n += tracks.size();
  return n;
}

void Dataset::validate() const {
  for (const auto& [vid, tracks] : annotations) {
    auto v = videos.find(vid);
    if (v == videos.end())
      throw ValidationError("annotations reference unknown video_id " + std::to_string(vid));
    for (const auto& t : tracks) {
      const std::string where = "video " + std::to_string(vid) + ", instance " + std::to_string(t.id);
      if (!categories.contains(t.category_id))
        throw ValidationError(where + ": category_id " + std::to_string(t.category_id) +
                              " is not in categories");
      if (t.masks.size() != t.boxes.size())
        throw ValidationError(where + ": " + std::to_string(t.masks.size()) + " masks but " +
                              std::to_string(t.boxes.size()) + " boxes");
      if (t.frame_count() != v->second.length())
        throw ValidationError(where + ": track spans " + std::to_string(t.frame_count()) +
                              " frames, video has " + std::to_string(v->second.length()));
    }
  }
}

ClassRegistry::ClassRegistry(std::vector<CategoryId> known_ids) : known_ids_(std::move(known_ids)) {
  std::set<CategoryId> seen;
  for (CategoryId id : known_ids_) {
    if (id == kUnknownCategory) throw ConfigError("category id 0 is reserved for unknown");
    if (!seen.insert(id).second) throw ConfigError("duplicate known category id " + std::to_string(id));
  }
}

bool ClassRegistry::is_known(CategoryId id) const { return column_of(id) >= 0; }

int ClassRegistry::column_of(CategoryId id) const {
  auto it = std::find(known_ids_.begin(), known_ids_.end(), id);
  return it == known_ids_.end() ? -1 : static_cast<int>(it - known_ids_.begin()) + 1;
}

CategoryId ClassRegistry::category_at(int column) const {
  if (column == 0) return kUnknownCategory;
  return known_ids_.at(static_cast<std::size_t>(column - 1));
}

ClassRegistry ClassRegistry::extended(const std::vector<CategoryId>& new_ids) const {
  std::vector<CategoryId> ids = known_ids_;
  for (CategoryId id : new_ids)
    if (!is_known(id)) ids.push_back(id);
  return ClassRegistry(std::move(ids));
}

bool ClassRegistry::contains_all(const ClassRegistry& other) const {
  return std::all_of(other.known_ids_.begin(), other.known_ids_.end(),
                     [this](CategoryId id) { return is_known(id); });
}

VideoClip make_clip(VideoId video_id, const std::vector<RgbImage>& frames, int start, int count) {
  if (start < 0 || count < 1 || start + count > static_cast<int>(frames.size()))
    throw ShapeError("clip [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") out of range for video " + std::to_string(video_id));
  VideoClip clip;
  clip.video_id = video_id;
  for (int i = start; i < start + count; ++i) {
    clip.frame_indices.push_back(i);
    clip.frames.push_back(frames[static_cast<std::size_t>(i)]);
  }
  return clip;
}

InstanceTrack slice_track(const InstanceTrack& track, int start, int count) {
  InstanceTrack out = track;
  out.masks.assign(track.masks.begin() + start, track.masks.begin() + start + count);
  out.boxes.assign(track.boxes.begin() + start, track.boxes.begin() + start + count);
  return out;
}

}  // namespace owvis
