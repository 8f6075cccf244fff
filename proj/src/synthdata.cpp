#include "owvis/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "owvis/annotations.hpp"
#include "owvis/error.hpp"
#include "owvis/image_io.hpp"

namespace owvis {

using nlohmann::json;

Geometry geometry_from_string(const std::string& s) {
  if (s == "disk") return Geometry::kDisk;
  if (s == "square") return Geometry::kSquare;
  if (s == "triangle") return Geometry::kTriangle;
  if (s == "bar") return Geometry::kBar;
  if (s == "ring") return Geometry::kRing;
  throw ConfigError("unknown geometry '" + s + "'");
}

std::string to_string(Geometry g) {
  switch (g) {
    case Geometry::kDisk: return "disk";
    case Geometry::kSquare: return "square";
    case Geometry::kTriangle: return "triangle";
    case Geometry::kBar: return "bar";
    case Geometry::kRing: return "ring";
  }
  return "disk";
}

void SynthConfig::validate() const {
  if (height <= 0 || width <= 0 || height % 16 != 0 || width % 16 != 0)
    throw ConfigError("synthetic resolution must be positive multiples of 16, got " + std::to_string(height) + "x" +
                      std::to_string(width));
  if (classes.size() < 2) throw ConfigError("at least two shape classes are required");
  if (num_videos < 1 || frames_per_video < 1) throw ConfigError("num_videos and frames_per_video must be >= 1");
  if (instances_min < 1 || instances_max < instances_min) throw ConfigError("invalid instances_per_video range");
  if (size_min <= 0 || size_max < size_min) throw ConfigError("invalid size range");
  if (2 * size_max >= std::min(height, width)) throw ConfigError("shapes do not fit inside the frame");
  if (speed_min < 0 || speed_max < speed_min) throw ConfigError("invalid speed range");
}

SynthConfig SynthConfig::from_json(const json& j) {
  SynthConfig c;
  try {
    c.num_videos = j.value("num_videos", c.num_videos);
    c.frames_per_video = j.value("frames_per_video", c.frames_per_video);
    if (j.contains("resolution")) {
      const auto r = j.at("resolution").get<std::vector<int>>();
      if (r.size() != 2) throw ConfigError("resolution must be [height, width]");
      c.height = r[0];
      c.width = r[1];
    }
    if (!j.contains("shape_classes")) c.classes = desk_synth_config().classes;
    for (const json& s : j.value("shape_classes", json::array())) {
      ShapeClass sc;
      sc.name = s.at("name").get<std::string>();
      sc.supercategory = s.at("supercategory").get<std::string>();
      sc.geometry = geometry_from_string(s.at("geometry").get<std::string>());
      if (s.contains("color")) sc.color = s.at("color").get<std::array<float, 3>>();
      c.classes.push_back(sc);
    }
    if (j.contains("instances_per_video")) {
      const auto r = j.at("instances_per_video").get<std::vector<int>>();
      if (r.size() != 2) throw ConfigError("instances_per_video must be [min, max]");
      c.instances_min = r[0];
      c.instances_max = r[1];
    }
    if (j.contains("size")) {
      const auto r = j.at("size").get<std::vector<double>>();
      if (r.size() != 2) throw ConfigError("size must be [min, max]");
      c.size_min = r[0];
      c.size_max = r[1];
    }
    if (j.contains("motion")) {
      const auto r = j.at("motion").get<std::vector<double>>();
      if (r.size() != 2) throw ConfigError("motion must be [min, max]");
      c.speed_min = r[0];
      c.speed_max = r[1];
    }
    c.noise = j.value("noise", c.noise);
    if (j.contains("background")) c.background = j.at("background").get<std::array<float, 3>>();
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ParseError(std::string("synthetic config: ") + e.what());
  }
  c.validate();
  return c;
}

json SynthConfig::to_json() const {
  json cls = json::array();
  for (const auto& c : classes)
    cls.push_back({{"name", c.name}, {"supercategory", c.supercategory}, {"geometry", to_string(c.geometry)},
                   {"color", c.color}});
  return {{"num_videos", num_videos},
          {"frames_per_video", frames_per_video},
          {"resolution", {height, width}},
          {"shape_classes", cls},
          {"instances_per_video", {instances_min, instances_max}},
          {"size", {size_min, size_max}},
          {"motion", {speed_min, speed_max}},
          {"noise", noise},
          {"background", background},
          {"seed", seed}};
}

SynthConfig desk_synth_config() {
  SynthConfig c;
  const std::array<float, 3> red{0.9f, 0.2f, 0.2f}, green{0.2f, 0.85f, 0.3f}, blue{0.25f, 0.35f, 0.95f};
  c.classes = {{"person", "Human", Geometry::kDisk, red},
               {"dog", "Animals", Geometry::kSquare, green},
               {"fish", "Aquatic Animals", Geometry::kTriangle, blue},
               {"car", "Vehicle", Geometry::kBar, red},
               {"surfboard", "Others", Geometry::kRing, green}};
  return c;
}

SynthConfig split_demo_synth_config() {
  SynthConfig c;
  c.num_videos = 40;
  c.frames_per_video = 3;
  c.instances_min = 1;
  c.instances_max = 3;
  c.size_min = 5.0;
  c.size_max = 9.0;
  c.classes = {{"person", "Human", Geometry::kDisk, {0.9f, 0.2f, 0.2f}},
               {"dog", "Animals (domestic)", Geometry::kSquare, {0.2f, 0.85f, 0.3f}},
               {"zebra", "Animals (wild)", Geometry::kBar, {0.9f, 0.9f, 0.9f}},
               {"frog", "Aquatic Animals (amphibious)", Geometry::kTriangle, {0.4f, 0.7f, 0.2f}},
               {"shark", "Aquatic Animals (underwater)", Geometry::kTriangle, {0.25f, 0.35f, 0.95f}},
               {"truck", "Vehicle (road)", Geometry::kSquare, {0.8f, 0.6f, 0.1f}},
               {"airplane", "Vehicle (non-road)", Geometry::kBar, {0.6f, 0.6f, 0.7f}},
               {"surfboard", "Others (board)", Geometry::kRing, {0.9f, 0.5f, 0.8f}},
               {"hand", "Others (non-board)", Geometry::kDisk, {0.9f, 0.7f, 0.6f}}};
  return c;
}

bool shape_contains(Geometry g, double s, double dx, double dy) {
  switch (g) {
    case Geometry::kDisk: return dx * dx + dy * dy <= s * s;
    case Geometry::kSquare: return std::abs(dx) <= 0.85 * s && std::abs(dy) <= 0.85 * s;
    case Geometry::kTriangle: return dy >= -s && dy <= s && std::abs(dx) <= (dy + s) / 2.0;
    case Geometry::kBar: return std::abs(dx) <= s && std::abs(dy) <= 0.4 * s;
    case Geometry::kRing: {
      const double r2 = dx * dx + dy * dy;
      return r2 <= s * s && r2 >= 0.3025 * s * s;  // inner radius 0.55 s
    }
  }
  return false;
}

namespace {

struct Mover {
  int class_index = 0;
  double size = 0;
  double x = 0, y = 0, vx = 0, vy = 0;
};

void bounce(double& p, double& v, double lo, double hi) {
  if (p < lo) {
    p = 2 * lo - p;
    v = -v;
  } else if (p > hi) {
    p = 2 * hi - p;
    v = -v;
  }
}

int instances_in_video(const SynthConfig& c, int v) {
  std::mt19937_64 rng(c.seed + static_cast<std::uint64_t>(v));
  std::uniform_int_distribution<int> count(c.instances_min, c.instances_max);
  return count(rng);
}

}  // namespace

SynthOutput generate(const SynthConfig& c) {
  c.validate();
  SynthOutput out;
  Dataset& ds = out.dataset;
  const int num_classes = static_cast<int>(c.classes.size());
  for (int k = 0; k < num_classes; ++k)
    ds.categories[k + 1] = {k + 1, c.classes[static_cast<std::size_t>(k)].name,
                            c.classes[static_cast<std::size_t>(k)].supercategory};

  // Classes cycle over the global instance index so per-class counts differ by
  // at most one.
  std::vector<int> offsets(static_cast<std::size_t>(c.num_videos) + 1, 0);
  for (int v = 0; v < c.num_videos; ++v)
    offsets[static_cast<std::size_t>(v) + 1] = offsets[static_cast<std::size_t>(v)] + instances_in_video(c, v);

  for (int v = 0; v < c.num_videos; ++v) {
    std::mt19937_64 rng(c.seed + static_cast<std::uint64_t>(v));
    std::uniform_int_distribution<int> count(c.instances_min, c.instances_max);
    const int n = count(rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Mover> movers;
    for (int j = 0; j < n; ++j) {
      Mover m;
      m.class_index = (offsets[static_cast<std::size_t>(v)] + j) % num_classes;
      m.size = c.size_min + (c.size_max - c.size_min) * unit(rng);
      m.x = m.size + (c.width - 2 * m.size) * unit(rng);
      m.y = m.size + (c.height - 2 * m.size) * unit(rng);
      const double speed = c.speed_min + (c.speed_max - c.speed_min) * unit(rng);
      const double angle = 2.0 * std::numbers::pi * unit(rng);
      m.vx = speed * std::cos(angle);
      m.vy = speed * std::sin(angle);
      movers.push_back(m);
    }

    const VideoId vid = v + 1;
    VideoInfo info;
    info.id = vid;
    info.height = info.source_height = c.height;
    info.width = info.source_width = c.width;
    std::vector<InstanceTrack> tracks(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      auto& t = tracks[static_cast<std::size_t>(j)];
      t.id = offsets[static_cast<std::size_t>(v)] + j + 1;
      t.video_id = vid;
      t.category_id = movers[static_cast<std::size_t>(j)].class_index + 1;
    }

    auto& frames = out.frames[vid];
    for (int f = 0; f < c.frames_per_video; ++f) {
      char name[64];
      std::snprintf(name, sizeof(name), "frames/%04d/%05d.png", static_cast<int>(vid), f);
      info.file_names.emplace_back(name);

      RgbImage img(c.height, c.width);
      std::vector<Mask> visible(static_cast<std::size_t>(n), Mask(c.height, c.width));
      for (int r = 0; r < c.height; ++r)
        for (int col = 0; col < c.width; ++col) {
          int top = -1;
          for (int j = 0; j < n; ++j) {
            const auto& m = movers[static_cast<std::size_t>(j)];
            if (shape_contains(c.classes[static_cast<std::size_t>(m.class_index)].geometry, m.size,
                               col + 0.5 - m.x, r + 0.5 - m.y))
              top = j;  // later instances occlude earlier ones
          }
          const auto& color = top >= 0
                                  ? c.classes[static_cast<std::size_t>(movers[static_cast<std::size_t>(top)].class_index)].color
                                  : c.background;
          if (top >= 0) visible[static_cast<std::size_t>(top)].at(r, col) = 1;
          // Quantized to 8 bits so in-memory frames equal their PNG round trip.
          for (int ch = 0; ch < 3; ++ch) {
            const float v = color[static_cast<std::size_t>(ch)] + c.noise * static_cast<float>(2.0 * unit(rng) - 1.0);
            img.at(ch, r, col) = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
          }
        }
      frames.push_back(std::move(img));
      for (int j = 0; j < n; ++j) {
        auto& t = tracks[static_cast<std::size_t>(j)];
        t.boxes.push_back(box_from_mask(visible[static_cast<std::size_t>(j)]));
        t.masks.push_back(std::move(visible[static_cast<std::size_t>(j)]));
      }
      for (auto& m : movers) {
        m.x += m.vx;
        m.y += m.vy;
        bounce(m.x, m.vx, m.size, c.width - m.size);
        bounce(m.y, m.vy, m.size, c.height - m.size);
      }
    }
    ds.videos[vid] = std::move(info);
    ds.annotations[vid] = std::move(tracks);
  }
  ds.validate();
  return out;
}

void write_synth(const SynthOutput& output, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  save_annotations(output.dataset, out_dir / "annotations.json");
  for (const auto& [vid, info] : output.dataset.videos) {
    const auto& frames = output.frames.at(vid);
    for (std::size_t f = 0; f < frames.size(); ++f) write_png(frames[f], out_dir / info.file_names[f]);
  }
}

}  // namespace owvis
