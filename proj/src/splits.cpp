#include "owvis/splits.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "owvis/error.hpp"

namespace owvis {

using nlohmann::json;

SplitConfig SplitConfig::from_json(const json& j) {
  SplitConfig c;
  try {
    c.split_name = j.at("split_name").get<std::string>();
    c.task1_supercats = j.at("task1_supercategories").get<std::vector<std::string>>();
    c.task2_supercats = j.at("task2_supercategories").get<std::vector<std::string>>();
    c.test_fraction = j.value("test_fraction", 0.2);
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw ParseError(std::string("split config: ") + e.what());
  }
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0))
    throw ConfigError("split " + c.split_name + ": test_fraction must lie in (0, 1)");
  return c;
}

json SplitConfig::to_json() const {
  return {{"split_name", split_name},
          {"task1_supercategories", task1_supercats},
          {"task2_supercategories", task2_supercats},
          {"test_fraction", test_fraction},
          {"seed", seed}};
}

std::vector<SplitConfig> default_split_configs() {
  // Split D and E list Human under both tasks; it stays with Task-1 so the
  // class sets remain disjoint.
  return {
      {"A", {"Human", "Animals", "Aquatic Animals"}, {"Vehicle", "Others"}, 0.2, 0},
      {"B", {"Human", "Vehicle", "Others"}, {"Animals", "Aquatic Animals"}, 0.2, 0},
      {"C", {"Human", "Animals"}, {"Aquatic Animals", "Vehicle", "Others"}, 0.2, 0},
      {"D",
       {"Human", "Animals (domestic)", "Aquatic Animals (amphibious)", "Vehicle (road)", "Others (board)"},
       {"Animals (wild)", "Aquatic Animals (underwater)", "Vehicle (non-road)", "Others (non-board)"},
       0.2,
       0},
      {"E",
       {"Human", "Animals (wild)", "Aquatic Animals (underwater)", "Vehicle (non-road)", "Others (non-board)"},
       {"Animals (domestic)", "Aquatic Animals (amphibious)", "Vehicle (road)", "Others (board)"},
       0.2,
       0},
  };
}

std::vector<CategoryId> TaskSplit::new_categories(int t) const {
  const auto& now = task(t).known_category_ids;
  if (t == 1) return now;
  const auto& before = task(t - 1).known_category_ids;
  std::vector<CategoryId> out;
  for (CategoryId id : now)
    if (std::find(before.begin(), before.end(), id) == before.end()) out.push_back(id);
  return out;
}

std::vector<VideoId> TaskSplit::own_test_videos(int t) const {
  const auto& now = task(t).known_test_videos;
  if (t == 1) return now;
  const auto& before = task(t - 1).known_test_videos;
  std::vector<VideoId> out;
  for (VideoId id : now)
    if (std::find(before.begin(), before.end(), id) == before.end()) out.push_back(id);
  return out;
}

json TaskSplit::to_json() const {
  json ts = json::array();
  for (const auto& t : tasks)
    ts.push_back({{"known_category_ids", t.known_category_ids},
                  {"train_videos", t.train_videos},
                  {"known_test_videos", t.known_test_videos},
                  {"unknown_test_videos", t.unknown_test_videos}});
  return {{"split_name", split_name}, {"seed", seed}, {"tasks", ts}};
}

TaskSplit TaskSplit::from_json(const json& j) {
  TaskSplit s;
  try {
    s.split_name = j.at("split_name").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const json& t : j.at("tasks")) {
      TaskPartition p;
      p.known_category_ids = t.at("known_category_ids").get<std::vector<CategoryId>>();
      p.train_videos = t.at("train_videos").get<std::vector<VideoId>>();
      p.known_test_videos = t.at("known_test_videos").get<std::vector<VideoId>>();
      p.unknown_test_videos = t.at("unknown_test_videos").get<std::vector<VideoId>>();
      s.tasks.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("split file: ") + e.what());
  }
  return s;
}

std::string TaskSplit::serialize() const { return to_json().dump(); }

bool supercategory_covers(const std::string& group, const std::string& supercategory) {
  if (group == supercategory) return true;
  return supercategory.size() > group.size() + 2 && supercategory.compare(0, group.size(), group) == 0 &&
         supercategory.compare(group.size(), 2, " (") == 0;
}

namespace {

std::vector<VideoId> sorted_union(std::vector<VideoId> a, const std::vector<VideoId>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

}  // namespace

TaskSplit build_split(const Dataset& dataset, const SplitConfig& config) {
  if (!(config.test_fraction > 0.0 && config.test_fraction < 1.0))
    throw ConfigError("split " + config.split_name + ": test_fraction must lie in (0, 1)");
  const std::vector<const std::vector<std::string>*> groups = {&config.task1_supercats, &config.task2_supercats};
  const int num_tasks = static_cast<int>(groups.size());

  std::map<CategoryId, int> task_of;
  for (const auto& [id, cat] : dataset.categories) {
    std::vector<int> covering;
    for (int t = 0; t < num_tasks; ++t)
      if (std::any_of(groups[t]->begin(), groups[t]->end(),
                      [&](const std::string& g) { return supercategory_covers(g, cat.supercategory); }))
        covering.push_back(t);
    if (covering.empty())
      throw ConfigError("split " + config.split_name + ": supercategory '" + cat.supercategory + "' of category '" +
                        cat.name + "' is not assigned to any task");
    if (covering.size() > 1)
      throw ConfigError("split " + config.split_name + ": supercategory '" + cat.supercategory + "' of category '" +
                        cat.name + "' is assigned to more than one task");
    task_of[id] = covering.front();
  }

  std::vector<std::vector<VideoId>> task_videos(static_cast<std::size_t>(num_tasks));
  for (const auto& [vid, info] : dataset.videos) {
    auto it = dataset.annotations.find(vid);
    if (it == dataset.annotations.end() || it->second.empty()) continue;
    std::vector<int> counts(static_cast<std::size_t>(num_tasks), 0);
    for (const auto& t : it->second) ++counts[static_cast<std::size_t>(task_of.at(t.category_id))];
    // max_element returns the first maximum, so ties go to the lower task.
    const auto best = std::max_element(counts.begin(), counts.end()) - counts.begin();
    task_videos[static_cast<std::size_t>(best)].push_back(vid);
  }

  TaskSplit split;
  split.split_name = config.split_name;
  split.seed = config.seed;
  std::vector<std::vector<VideoId>> test(static_cast<std::size_t>(num_tasks));
  std::vector<CategoryId> known;
  for (int t = 0; t < num_tasks; ++t) {
    auto vids = task_videos[static_cast<std::size_t>(t)];
    if (vids.empty())
      throw ValidationError("split " + config.split_name + ": task " + std::to_string(t + 1) + " has zero videos");
    std::mt19937_64 rng(config.seed + static_cast<std::uint64_t>(t));
    std::shuffle(vids.begin(), vids.end(), rng);
    const auto n = vids.size();
    const auto n_test = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(config.test_fraction * static_cast<double>(n) + 1e-9)));
    std::vector<VideoId> te(vids.begin(), vids.begin() + static_cast<std::ptrdiff_t>(std::min(n_test, n)));
    std::vector<VideoId> tr(vids.begin() + static_cast<std::ptrdiff_t>(std::min(n_test, n)), vids.end());
    std::sort(te.begin(), te.end());
    std::sort(tr.begin(), tr.end());
    test[static_cast<std::size_t>(t)] = te;

    for (const auto& [id, task] : task_of)
      if (task == t) known.push_back(id);
    TaskPartition p;
    p.known_category_ids = known;
    p.train_videos = tr;
    split.tasks.push_back(std::move(p));
  }
  for (int t = 0; t < num_tasks; ++t) {
    auto& p = split.tasks[static_cast<std::size_t>(t)];
    for (int a = 0; a < num_tasks; ++a) {
      auto& target = a <= t ? p.known_test_videos : p.unknown_test_videos;
      target = sorted_union(target, test[static_cast<std::size_t>(a)]);
    }
  }
  return split;
}

json SplitReport::to_json() const {
  auto entries = [](const std::vector<SplitReportEntry>& es) {
    json arr = json::array();
    for (const auto& e : es)
      arr.push_back({{"kind", e.kind}, {"task", e.task}, {"video_id", e.video_id},
                     {"instance_id", e.instance_id}, {"detail", e.detail}});
    return arr;
  };
  return {{"ok", ok()}, {"violations", entries(violations)}, {"suppressed", entries(suppressed)}};
}

SplitReport validate_split(const TaskSplit& split, const Dataset& dataset) {
  SplitReport report;
  auto flag = [&](std::string kind, int task, VideoId vid, std::string detail) {
    report.violations.push_back({std::move(kind), task, vid, -1, std::move(detail)});
  };
  const int num_tasks = static_cast<int>(split.tasks.size());

  std::set<CategoryId> seen_new;
  for (int t = 1; t <= num_tasks; ++t) {
    const auto& p = split.task(t);
    if (t > 1) {
      const auto& prev = split.task(t - 1).known_category_ids;
      for (CategoryId id : prev)
        if (std::find(p.known_category_ids.begin(), p.known_category_ids.end(), id) == p.known_category_ids.end())
          flag("known-set-shrink", t, 0, "category " + std::to_string(id) + " dropped from the known set");
    }
    for (CategoryId id : split.new_categories(t))
      if (!seen_new.insert(id).second)
        flag("class-overlap", t, 0, "category " + std::to_string(id) + " introduced by more than one task");

    std::set<VideoId> train(p.train_videos.begin(), p.train_videos.end());
    for (VideoId v : p.known_test_videos)
      if (train.contains(v)) flag("train-test-overlap", t, v, "video in both train and known test");
    for (VideoId v : p.unknown_test_videos)
      if (train.contains(v)) flag("train-test-overlap", t, v, "video in both train and unknown test");
    for (VideoId v : p.unknown_test_videos) {
      auto it = dataset.annotations.find(v);
      const bool has_future =
          it != dataset.annotations.end() &&
          std::any_of(it->second.begin(), it->second.end(), [&](const InstanceTrack& tr) {
            return std::find(p.known_category_ids.begin(), p.known_category_ids.end(), tr.category_id) ==
                   p.known_category_ids.end();
          });
      if (!has_future) flag("unknown-test-without-unknowns", t, v, "no instance of a not-yet-known category");
    }
    if (t == num_tasks && !p.unknown_test_videos.empty())
      flag("unknown-test-in-final-task", t, 0, "final task must have no unknown test videos");

    auto check_exists = [&](const std::vector<VideoId>& vids) {
      for (VideoId v : vids)
        if (!dataset.videos.contains(v)) flag("missing-video", t, v, "video id not in dataset");
    };
    check_exists(p.train_videos);
    check_exists(p.known_test_videos);
    check_exists(p.unknown_test_videos);

    for (VideoId v : p.train_videos) {
      auto it = dataset.annotations.find(v);
      if (it == dataset.annotations.end()) continue;
      for (const auto& tr : it->second)
        if (std::find(p.known_category_ids.begin(), p.known_category_ids.end(), tr.category_id) ==
            p.known_category_ids.end())
          report.suppressed.push_back({"suppressed-future-class instance", t, v, tr.id,
                                       "category " + std::to_string(tr.category_id)});
    }
  }
  return report;
}

std::vector<TaskStats> split_stats(const TaskSplit& split, const Dataset& dataset) {
  auto count = [&](const std::vector<VideoId>& vids) {
    PartitionCount c;
    c.videos = vids.size();
    for (VideoId v : vids) {
      auto it = dataset.annotations.find(v);
      if (it != dataset.annotations.end()) c.instances += it->second.size();
    }
    return c;
  };
  std::vector<TaskStats> out;
  for (int t = 1; t <= static_cast<int>(split.tasks.size()); ++t) {
    const auto& p = split.task(t);
    out.push_back({t, count(p.train_videos), count(split.own_test_videos(t)), count(p.known_test_videos),
                   count(p.unknown_test_videos)});
  }
  return out;
}

json split_stats_to_json(const std::vector<TaskStats>& stats) {
  json arr = json::array();
  auto pc = [](const PartitionCount& c) { return json{{"videos", c.videos}, {"instances", c.instances}}; };
  for (const auto& s : stats)
    arr.push_back({{"task", s.task}, {"train", pc(s.train)}, {"test", pc(s.test)},
                   {"known_test", pc(s.known_test)}, {"unknown_test", pc(s.unknown_test)}});
  return arr;
}

}  // namespace owvis
