#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "owvis/data_model.hpp"

namespace owvis {

enum class Geometry { kDisk, kSquare, kTriangle, kBar, kRing };

Geometry geometry_from_string(const std::string& s);
std::string to_string(Geometry g);

struct ShapeClass {
  std::string name;
  std::string supercategory;
  Geometry geometry = Geometry::kDisk;
  std::array<float, 3> color{1.0f, 1.0f, 1.0f};
};

/// Moving-shapes video generator settings. Sizes are shape radii in pixels,
/// speeds in pixels per frame.
struct SynthConfig {
  int num_videos = 24;
  int frames_per_video = 5;
  int height = 64;
  int width = 64;
  std::vector<ShapeClass> classes;
  int instances_min = 2;
  int instances_max = 2;
  double size_min = 9.0;
  double size_max = 13.0;
  double speed_min = 0.0;
  double speed_max = 2.5;
  float noise = 0.03f;
  std::array<float, 3> background{0.1f, 0.1f, 0.12f};
  std::uint64_t seed = 7;

  void validate() const;
  static SynthConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// 3 known-style classes (Human, Animals, Aquatic Animals) plus 2 classes
/// (Vehicle, Others) whose colors repeat known ones.
SynthConfig desk_synth_config();

/// Nine classes spread over qualified super-categories so all five default
/// splits can be built.
SynthConfig split_demo_synth_config();

struct SynthOutput {
  Dataset dataset;
  FrameTable frames;
};

/// Renders every video. Video v draws from a generator seeded with seed + v.
SynthOutput generate(const SynthConfig& config);

/// Writes annotations.json and frames/<video>/<frame>.png under `out_dir`.
void write_synth(const SynthOutput& output, const std::filesystem::path& out_dir);

/// Inside test for a shape of radius `size` at offset (dx, dy) from its center.
bool shape_contains(Geometry g, double size, double dx, double dy);

}  // namespace owvis
