#include "owvis/annotations.hpp"

#include <fstream>
#include <sstream>

#include "owvis/error.hpp"
#include "owvis/rle.hpp"

namespace owvis {

using nlohmann::json;

namespace {

const json& require(const json& obj, const char* key, const std::string& ctx) {
  if (!obj.is_object() || !obj.contains(key))
    throw ParseError(ctx + ": missing key '" + key + "'");
  return obj.at(key);
}

template <class T>
T require_as(const json& obj, const char* key, const std::string& ctx) {
  const json& v = require(obj, key, ctx);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ParseError(ctx + ": key '" + key + "' has the wrong type");
  }
}

int round_up16(int v) { return (v + 15) / 16 * 16; }

Mask decode_segmentation(const json& seg, const std::string& ctx) {
  const auto size = require_as<std::vector<int>>(seg, "size", ctx);
  if (size.size() != 2) throw ParseError(ctx + ": key 'size' must hold [height, width]");
  const json& counts = require(seg, "counts", ctx);
  if (counts.is_string()) return rle::decode(rle::counts_from_string(counts.get<std::string>()), size[0], size[1]);
  if (counts.is_array()) return rle::decode(counts.get<std::vector<std::uint32_t>>(), size[0], size[1]);
  throw ParseError(ctx + ": key 'counts' must be a string or a list");
}

json encode_segmentation(const Mask& m) {
  return json{{"size", {m.height, m.width}}, {"counts", rle::counts_to_string(rle::encode(m))}};
}

}  // namespace

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": JSON syntax error: " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

Dataset load_annotations(const std::filesystem::path& path) {
  return parse_annotations(read_json_file(path), path.parent_path());
}

Dataset parse_annotations(const json& doc, const std::filesystem::path& image_root) {
  Dataset ds;
  ds.image_root = image_root;
  const std::string root = "annotations file";
  for (const char* key : {"videos", "annotations", "categories"})
    if (!require(doc, key, root).is_array()) throw ParseError(root + ": key '" + key + "' must be a list");

  std::size_t i = 0;
  for (const json& c : doc["categories"]) {
    const std::string ctx = "categories[" + std::to_string(i++) + "]";
    Category cat;
    cat.id = require_as<int>(c, "id", ctx);
    cat.name = require_as<std::string>(c, "name", ctx);
    cat.supercategory = c.contains("supercategory") ? require_as<std::string>(c, "supercategory", ctx) : "";
    if (cat.id == kUnknownCategory) throw ValidationError(ctx + ": category id 0 is reserved for unknown");
    ds.categories[cat.id] = cat;
  }

  i = 0;
  for (const json& v : doc["videos"]) {
    const std::string ctx = "videos[" + std::to_string(i++) + "]";
    VideoInfo info;
    info.id = require_as<VideoId>(v, "id", ctx);
    info.source_height = require_as<int>(v, "height", ctx);
    info.source_width = require_as<int>(v, "width", ctx);
    info.file_names = require_as<std::vector<std::string>>(v, "file_names", ctx);
    if (info.source_height <= 0 || info.source_width <= 0)
      throw ValidationError(ctx + ": non-positive resolution");
    info.height = round_up16(info.source_height);
    info.width = round_up16(info.source_width);
    ds.videos[info.id] = std::move(info);
  }

  i = 0;
  for (const json& a : doc["annotations"]) {
    const std::string ctx = "annotations[" + std::to_string(i++) + "]";
    InstanceTrack t;
    t.id = require_as<std::int64_t>(a, "id", ctx);
    t.video_id = require_as<VideoId>(a, "video_id", ctx);
    t.category_id = require_as<int>(a, "category_id", ctx);
    const std::string where = "video " + std::to_string(t.video_id) + ", instance " + std::to_string(t.id);
    auto vit = ds.videos.find(t.video_id);
    if (vit == ds.videos.end()) throw ValidationError(where + ": video_id not present in videos");
    if (!ds.categories.contains(t.category_id))
      throw ValidationError(where + ": category_id " + std::to_string(t.category_id) + " not present in categories");
    const VideoInfo& info = vit->second;
    const json& segs = require(a, "segmentations", ctx);
    if (!segs.is_array()) throw ParseError(ctx + ": key 'segmentations' must be a list");
    if (a.contains("bboxes")) {
      const json& boxes = a["bboxes"];
      if (!boxes.is_array()) throw ParseError(ctx + ": key 'bboxes' must be a list");
      if (boxes.size() != segs.size())
        throw ValidationError(where + ": " + std::to_string(boxes.size()) + " boxes but " +
                              std::to_string(segs.size()) + " masks");
    }
    std::size_t f = 0;
    for (const json& s : segs) {
      const std::string fctx = ctx + ".segmentations[" + std::to_string(f++) + "]";
      Mask m;
      if (s.is_null()) {
        m = Mask(info.height, info.width);
      } else {
        m = decode_segmentation(s, fctx);
        if (m.height != info.source_height || m.width != info.source_width)
          throw ValidationError(where + ": mask size differs from video resolution");
        m = pad_mask(m, info.height, info.width);
      }
      t.boxes.push_back(box_from_mask(m));
      t.masks.push_back(std::move(m));
    }
    ds.annotations[t.video_id].push_back(std::move(t));
  }
  ds.validate();
  return ds;
}

json annotations_to_json(const Dataset& ds) {
  json videos = json::array(), anns = json::array(), cats = json::array();
  for (const auto& [id, c] : ds.categories)
    cats.push_back({{"id", c.id}, {"name", c.name}, {"supercategory", c.supercategory}});
  for (const auto& [id, v] : ds.videos)
    videos.push_back({{"id", v.id}, {"height", v.height}, {"width", v.width}, {"length", v.length()},
                      {"file_names", v.file_names}});
  for (const auto& [vid, tracks] : ds.annotations) {
    for (const auto& t : tracks) {
      json segs = json::array(), boxes = json::array(), areas = json::array();
      for (std::size_t f = 0; f < t.masks.size(); ++f) {
        const Mask& m = t.masks[f];
        if (m.is_empty()) {
          segs.push_back(nullptr);
          boxes.push_back(nullptr);
          areas.push_back(nullptr);
          continue;
        }
        const Box& b = t.boxes[f];
        segs.push_back(encode_segmentation(m));
        boxes.push_back({(b.cx - b.w / 2) * m.width, (b.cy - b.h / 2) * m.height, b.w * m.width, b.h * m.height});
        areas.push_back(m.area());
      }
      const auto& info = ds.videos.at(vid);
      anns.push_back({{"id", t.id}, {"video_id", vid}, {"category_id", t.category_id}, {"iscrowd", 0},
                      {"height", info.height}, {"width", info.width}, {"segmentations", segs},
                      {"bboxes", boxes}, {"areas", areas}});
    }
  }
  return json{{"videos", videos}, {"annotations", anns}, {"categories", cats}};
}

void save_annotations(const Dataset& ds, const std::filesystem::path& path) {
  write_text_file(path, annotations_to_json(ds).dump());
}

json predictions_to_json(const std::vector<InstanceTrack>& preds) {
  json out = json::array();
  for (const auto& p : preds) {
    json segs = json::array();
    for (const Mask& m : p.masks) segs.push_back(encode_segmentation(m));
    out.push_back({{"video_id", p.video_id}, {"category_id", p.category_id}, {"score", p.score},
                   {"segmentations", segs}});
  }
  return out;
}

std::vector<InstanceTrack> parse_predictions(const json& wrapped, const Dataset& ds) {
  const json& doc = wrapped.is_object() && wrapped.contains("predictions") ? wrapped.at("predictions") : wrapped;
  if (!doc.is_array()) throw ParseError("predictions file: top level must be a list");
  std::vector<InstanceTrack> out;
  std::size_t i = 0;
  for (const json& p : doc) {
    const std::string ctx = "predictions[" + std::to_string(i) + "]";
    InstanceTrack t;
    t.id = static_cast<std::int64_t>(i++);
    t.video_id = require_as<VideoId>(p, "video_id", ctx);
    t.category_id = require_as<int>(p, "category_id", ctx);
    t.score = require_as<double>(p, "score", ctx);
    auto vit = ds.videos.find(t.video_id);
    if (vit == ds.videos.end()) throw ValidationError(ctx + ": unknown video_id " + std::to_string(t.video_id));
    const json& segs = require(p, "segmentations", ctx);
    if (!segs.is_array()) throw ParseError(ctx + ": key 'segmentations' must be a list");
    std::size_t f = 0;
    for (const json& s : segs) {
      const std::string fctx = ctx + ".segmentations[" + std::to_string(f++) + "]";
      Mask m = s.is_null() ? Mask(vit->second.height, vit->second.width) : decode_segmentation(s, fctx);
      m = pad_mask(m, vit->second.height, vit->second.width);
      t.boxes.push_back(box_from_mask(m));
      t.masks.push_back(std::move(m));
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<InstanceTrack> load_predictions(const std::filesystem::path& path, const Dataset& ds) {
  return parse_predictions(read_json_file(path), ds);
}

void save_predictions(const std::vector<InstanceTrack>& preds, const std::filesystem::path& path) {
  write_text_file(path, predictions_to_json(preds).dump());
}

}  // namespace owvis
