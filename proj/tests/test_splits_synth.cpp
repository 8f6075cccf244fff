#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "owvis/annotations.hpp"
#include "owvis/error.hpp"
#include "owvis/splits.hpp"
#include "owvis/synthdata.hpp"

using namespace owvis;

namespace {

// n_task1 videos holding only a Human object and n_task2 holding only a
// Vehicle object.
Dataset two_group_dataset(int n_task1, int n_task2) {
  Dataset ds;
  ds.categories[1] = {1, "person", "Human"};
  ds.categories[2] = {2, "car", "Vehicle"};
  VideoId vid = 1;
  std::int64_t tid = 1;
  auto add = [&](CategoryId cat) {
    VideoInfo v;
    v.id = vid;
    v.height = v.width = v.source_height = v.source_width = 16;
    v.file_names = {"x.png"};
    ds.videos[vid] = v;
    InstanceTrack t;
    t.id = tid++;
    t.video_id = vid;
    t.category_id = cat;
    Mask m(16, 16);
    m.at(3, 3) = 1;
    t.masks = {m};
    t.boxes = {box_from_mask(m)};
    ds.annotations[vid].push_back(t);
    ++vid;
  };
  for (int i = 0; i < n_task1; ++i) add(1);
  for (int i = 0; i < n_task2; ++i) add(2);
  return ds;
}

SplitConfig two_group_config() {
  SplitConfig c;
  c.split_name = "T";
  c.task1_supercats = {"Human"};
  c.task2_supercats = {"Vehicle"};
  c.seed = 9;
  return c;
}

}  // namespace

TEST_CASE("ten task-1 videos give two test videos") {
  const Dataset ds = two_group_dataset(10, 5);
  const TaskSplit s = build_split(ds, two_group_config());
  CHECK(s.own_test_videos(1).size() == 2);
  CHECK(s.task(1).train_videos.size() == 8);
  CHECK(s.own_test_videos(2).size() == 1);
  CHECK(s.task(1).known_category_ids == std::vector<CategoryId>{1});
  CHECK(s.task(2).known_category_ids == std::vector<CategoryId>{1, 2});
  CHECK(s.task(1).unknown_test_videos == s.own_test_videos(2));
  CHECK(s.task(2).unknown_test_videos.empty());
  CHECK(validate_split(s, ds).ok());
}

TEST_CASE("task without videos is a construction error") {
  const Dataset ds = two_group_dataset(6, 0);
  CHECK_THROWS_AS(build_split(ds, two_group_config()), ValidationError);
}

TEST_CASE("unassigned and doubly assigned super-categories") {
  const Dataset ds = two_group_dataset(4, 4);
  SplitConfig c = two_group_config();
  c.task2_supercats = {};
  CHECK_THROWS_AS(build_split(ds, c), ConfigError);
  c.task2_supercats = {"Vehicle", "Human"};
  CHECK_THROWS_AS(build_split(ds, c), ConfigError);
}

TEST_CASE("planted train/test overlap is reported") {
  const Dataset ds = two_group_dataset(10, 5);
  TaskSplit s = build_split(ds, two_group_config());
  s.tasks[0].train_videos.push_back(s.own_test_videos(1).front());
  const SplitReport r = validate_split(s, ds);
  CHECK(r.violations.size() == 1);
  CHECK(r.violations.front().kind == "train-test-overlap");
}

TEST_CASE("future-class instances in task-1 train videos are listed") {
  Dataset ds = two_group_dataset(10, 5);
  // Put a Vehicle object into every Human video.
  std::int64_t tid = 1000;
  for (auto& [vid, tracks] : ds.annotations) {
    if (tracks.front().category_id != 1) continue;
    InstanceTrack t = tracks.front();
    t.id = tid++;
    t.category_id = 2;
    tracks.push_back(t);
  }
  const TaskSplit s = build_split(ds, two_group_config());
  const SplitReport r = validate_split(s, ds);
  CHECK(r.ok());
  std::size_t in_train = 0;
  for (const auto& e : r.suppressed) {
    CHECK(e.kind == "suppressed-future-class instance");
    in_train += e.task == 1 ? 1 : 0;
  }
  CHECK(in_train == s.task(1).train_videos.size());
}

TEST_CASE("split_stats counts add up") {
  SynthConfig cfg = split_demo_synth_config();
  cfg.num_videos = 12;
  const SynthOutput out = generate(cfg);
  const TaskSplit s = build_split(out.dataset, default_split_configs()[0]);
  const auto stats = split_stats(s, out.dataset);
  std::size_t videos = 0, instances = 0;
  for (const auto& t : stats) {
    videos += t.train.videos + t.test.videos;
    instances += t.train.instances + t.test.instances;
  }
  CHECK(videos == out.dataset.videos.size());
  CHECK(instances == out.dataset.track_count());
}

TEST_CASE("default splits are well formed on synthetic data") {
  const SynthOutput out = generate(split_demo_synth_config());
  for (const SplitConfig& cfg : default_split_configs()) {
    CAPTURE(cfg.split_name);
    const TaskSplit s = build_split(out.dataset, cfg);
    CHECK(validate_split(s, out.dataset).ok());
    const auto& k1 = s.task(1).known_category_ids;
    const auto& k2 = s.task(2).known_category_ids;
    CHECK(std::includes(k2.begin(), k2.end(), k1.begin(), k1.end()));
    CHECK(k2.size() > k1.size());
    CHECK(build_split(out.dataset, cfg).serialize() == s.serialize());
    CHECK(TaskSplit::from_json(s.to_json()).serialize() == s.serialize());
  }
}

TEST_CASE("split A partitions the desk classes") {
  const SynthOutput out = generate(desk_synth_config());
  const TaskSplit s = build_split(out.dataset, default_split_configs()[0]);
  std::set<std::string> t1, t2;
  for (CategoryId id : s.new_categories(1)) t1.insert(out.dataset.categories.at(id).supercategory);
  for (CategoryId id : s.new_categories(2)) t2.insert(out.dataset.categories.at(id).supercategory);
  CHECK(t1 == std::set<std::string>{"Human", "Animals", "Aquatic Animals"});
  CHECK(t2 == std::set<std::string>{"Vehicle", "Others"});
}

TEST_CASE("static disk has identical masks") {
  SynthConfig cfg = desk_synth_config();
  cfg.num_videos = 1;
  cfg.frames_per_video = 4;
  cfg.instances_min = cfg.instances_max = 1;
  cfg.speed_min = cfg.speed_max = 0.0;
  const SynthOutput out = generate(cfg);
  REQUIRE(out.dataset.track_count() == 1);
  const auto& t = out.dataset.annotations.begin()->second.front();
  REQUIRE(t.frame_count() == 4);
  for (int f = 1; f < 4; ++f) CHECK(t.masks[f] == t.masks[0]);
}

TEST_CASE("disk area matches pi r^2") {
  for (double r : {10.0, 11.5, 13.0}) {
    std::int64_t area = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) area += shape_contains(Geometry::kDisk, r, x + 0.5 - 32.0, y + 0.5 - 32.0);
    const double expected = std::numbers::pi * r * r;
    CHECK(std::abs(area - expected) / expected < 0.02);
  }
}

TEST_CASE("generation is deterministic and validated") {
  const SynthConfig cfg = desk_synth_config();
  CHECK(annotations_to_json(generate(cfg).dataset).dump() == annotations_to_json(generate(cfg).dataset).dump());
  SynthConfig bad = cfg;
  bad.height = 60;
  CHECK_THROWS_AS(generate(bad), ConfigError);
  CHECK(SynthConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
}

TEST_CASE("desk set is class balanced") {
  const SynthOutput out = generate(desk_synth_config());
  out.dataset.validate();
  std::map<CategoryId, int> counts;
  for (const auto& [vid, tracks] : out.dataset.annotations)
    for (const auto& t : tracks) ++counts[t.category_id];
  CHECK(counts.size() == 5);
  int lo = 1 << 30, hi = 0;
  for (const auto& [c, n] : counts) {
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  CHECK(hi - lo <= 1);
}
