#include "owvis/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "owvis/error.hpp"

namespace owvis {

using nlohmann::json;

std::vector<double> EvalConfig::default_thresholds() {
  std::vector<double> t;
  for (int p = 50; p <= 95; p += 5) t.push_back(p / 100.0);
  return t;
}

void EvalConfig::validate() const {
  if (iou_thresholds.empty()) throw ConfigError("at least one IoU threshold is required");
  for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
    if (!(iou_thresholds[i] > 0.0 && iou_thresholds[i] < 1.0)) throw ConfigError("IoU thresholds must lie in (0, 1)");
    if (i > 0 && iou_thresholds[i] <= iou_thresholds[i - 1])
      throw ConfigError("IoU thresholds must be strictly increasing");
  }
  if (max_dets_ap < 1 || max_dets_ar < 1) throw ConfigError("max detections must be >= 1");
}

double st_iou(const InstanceTrack& a, const InstanceTrack& b) {
  if (a.frame_count() != b.frame_count())
    throw ShapeError("st_iou: tracks span " + std::to_string(a.frame_count()) + " and " +
                     std::to_string(b.frame_count()) + " frames");
  std::int64_t inter = 0, uni = 0;
  for (int f = 0; f < a.frame_count(); ++f) {
    const Mask& ma = a.masks[static_cast<std::size_t>(f)];
    const Mask& mb = b.masks[static_cast<std::size_t>(f)];
    if (ma.height != mb.height || ma.width != mb.width) throw ShapeError("st_iou: mask resolutions differ");
    for (std::size_t i = 0; i < ma.data.size(); ++i) {
      const bool x = ma.data[i] != 0, y = mb.data[i] != 0;
      inter += (x && y) ? 1 : 0;
      uni += (x || y) ? 1 : 0;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

struct VideoBucket {
  std::vector<std::size_t> dets;  // score-descending, stable
  std::vector<std::size_t> gts;
  std::vector<std::vector<double>> iou;  // [det][gt]
};

std::map<VideoId, VideoBucket> bucket(const std::vector<InstanceTrack>& preds, const std::vector<InstanceTrack>& gts) {
  std::map<VideoId, VideoBucket> out;
  for (std::size_t i = 0; i < preds.size(); ++i) out[preds[i].video_id].dets.push_back(i);
  for (std::size_t i = 0; i < gts.size(); ++i) out[gts[i].video_id].gts.push_back(i);
  for (auto& [vid, b] : out) {
    std::stable_sort(b.dets.begin(), b.dets.end(),
                     [&](std::size_t x, std::size_t y) { return preds[x].score > preds[y].score; });
    b.iou.assign(b.dets.size(), std::vector<double>(b.gts.size(), 0.0));
    for (std::size_t d = 0; d < b.dets.size(); ++d)
      for (std::size_t g = 0; g < b.gts.size(); ++g) b.iou[d][g] = st_iou(preds[b.dets[d]], gts[b.gts[g]]);
  }
  return out;
}

struct ThresholdResult {
  double ap = 0.0;
  double recall = 0.0;
};

// Greedy score-ordered matching inside each video, then a precision/recall
// curve over the pooled detections with 101-point interpolation.
ThresholdResult evaluate_threshold(const std::map<VideoId, VideoBucket>& buckets,
                                   const std::vector<InstanceTrack>& preds, double threshold, int max_dets,
                                   std::size_t npos) {
  struct Scored {
    double score;
    bool tp;
  };
  std::vector<Scored> pooled;
  for (const auto& [vid, b] : buckets) {
    const std::size_t nd = std::min(b.dets.size(), static_cast<std::size_t>(max_dets));
    std::vector<bool> gt_taken(b.gts.size(), false);
    for (std::size_t d = 0; d < nd; ++d) {
      double best_iou = std::min(threshold, 1.0 - 1e-10);
      int best = -1;
      for (std::size_t g = 0; g < b.gts.size(); ++g) {
        if (gt_taken[g]) continue;
        if (b.iou[d][g] < best_iou) continue;
        best_iou = b.iou[d][g];
        best = static_cast<int>(g);
      }
      if (best >= 0) gt_taken[static_cast<std::size_t>(best)] = true;
      pooled.push_back({preds[b.dets[d]].score, best >= 0});
    }
  }
  std::stable_sort(pooled.begin(), pooled.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });

  ThresholdResult r;
  if (pooled.empty() || npos == 0) return r;
  std::vector<double> recall(pooled.size()), precision(pooled.size());
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    (pooled[i].tp ? tp : fp) += 1.0;
    recall[i] = tp / static_cast<double>(npos);
    precision[i] = tp / (tp + fp);
  }
  for (std::size_t i = pooled.size() - 1; i > 0; --i) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double rt = k / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), rt);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  r.ap = sum / 101.0;
  r.recall = recall.back();
  return r;
}

}  // namespace

ClassMetrics evaluate_class(const std::vector<InstanceTrack>& preds, const std::vector<InstanceTrack>& gts,
                            const EvalConfig& config) {
  config.validate();
  ClassMetrics m;
  m.num_gt = gts.size();
  m.num_pred = preds.size();
  if (gts.empty()) return m;
  const auto buckets = bucket(preds, gts);
  double ap_sum = 0.0, ar_sum = 0.0;
  for (std::size_t t = 0; t < config.iou_thresholds.size(); ++t) {
    const double thr = config.iou_thresholds[t];
    const auto ap = evaluate_threshold(buckets, preds, thr, config.max_dets_ap, gts.size());
    const auto ar = evaluate_threshold(buckets, preds, thr, config.max_dets_ar, gts.size());
    ap_sum += ap.ap;
    ar_sum += ar.recall;
    if (thr == 0.5) m.ap50 = ap.ap;
  }
  m.ap = ap_sum / static_cast<double>(config.iou_thresholds.size());
  m.ar1 = ar_sum / static_cast<double>(config.iou_thresholds.size());
  return m;
}

KnownMetrics evaluate_known(const std::vector<InstanceTrack>& preds, const std::vector<InstanceTrack>& gts,
                            const ClassRegistry& registry, const EvalConfig& config) {
  KnownMetrics out;
  for (CategoryId id : registry.known_ids()) {
    std::vector<InstanceTrack> p, g;
    for (const auto& t : gts)
      if (t.category_id == id) g.push_back(t);
    if (g.empty()) continue;
    for (const auto& t : preds)
      if (t.category_id == id) p.push_back(t);
    out.per_class[id] = evaluate_class(p, g, config);
  }
  if (out.per_class.empty()) return out;
  for (const auto& [id, m] : out.per_class) {
    out.mean_ap += m.ap;
    out.mean_ap50 += m.ap50;
    out.mean_ar1 += m.ar1;
  }
  const double n = static_cast<double>(out.per_class.size());
  out.mean_ap /= n;
  out.mean_ap50 /= n;
  out.mean_ar1 /= n;
  return out;
}

ClassMetrics evaluate_unknown(const std::vector<InstanceTrack>& preds, const std::vector<InstanceTrack>& gts_future,
                              const EvalConfig& config) {
  std::vector<InstanceTrack> p;
  for (const auto& t : preds)
    if (t.category_id == kUnknownCategory) p.push_back(t);
  std::vector<InstanceTrack> g = gts_future;
  for (auto& t : g) t.category_id = kUnknownCategory;
  return evaluate_class(p, g, config);
}

const ReportSection* EvalReport::section(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

json EvalReport::to_json() const {
  json secs = json::object();
  for (const auto& s : sections) {
    json per = json::object();
    for (const auto& [id, m] : s.per_class)
      per[std::to_string(id)] = {{"AP", m.ap}, {"AP50", m.ap50}, {"AR-1", m.ar1}, {"num_gt", m.num_gt}};
    secs[s.name] = {{"AP", s.ap}, {"AP50", s.ap50}, {"AR-1", s.ar1}, {"per_class", per}};
  }
  json j = {{"task", task}, {"sections", secs}};
  if (!fingerprint.empty()) j["fingerprint"] = fingerprint;
  return j;
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << "Task-" << task << '\n';
  char line[128];
  std::snprintf(line, sizeof(line), "%-18s %8s %8s %8s\n", "", "AP", "AR-1", "AP50");
  os << line;
  for (const auto& s : sections) {
    std::snprintf(line, sizeof(line), "%-18s %8.1f %8.1f %8.1f\n", s.name.c_str(), 100.0 * s.ap, 100.0 * s.ar1,
                  100.0 * s.ap50);
    os << line;
  }
  return os.str();
}

namespace {

ReportSection summarize(const std::string& name, const KnownMetrics& known, const std::vector<CategoryId>& ids) {
  ReportSection s;
  s.name = name;
  for (CategoryId id : ids) {
    auto it = known.per_class.find(id);
    if (it != known.per_class.end()) s.per_class[id] = it->second;
  }
  if (s.per_class.empty()) return s;
  for (const auto& [id, m] : s.per_class) {
    s.ap += m.ap;
    s.ap50 += m.ap50;
    s.ar1 += m.ar1;
  }
  const double n = static_cast<double>(s.per_class.size());
  s.ap /= n;
  s.ap50 /= n;
  s.ar1 /= n;
  return s;
}

}  // namespace

EvalReport build_report(int task, const KnownMetrics& known, const std::optional<ClassMetrics>& unknown,
                        const std::vector<std::vector<CategoryId>>& history) {
  if (task < 1 || static_cast<std::size_t>(task) > history.size())
    throw ConfigError("registry history does not cover task " + std::to_string(task));
  EvalReport r;
  r.task = task;
  const auto& now = history[static_cast<std::size_t>(task - 1)];
  if (task == 1) {
    r.sections.push_back(summarize("Known", known, now));
  } else {
    const auto& before = history[static_cast<std::size_t>(task - 2)];
    std::vector<CategoryId> current;
    for (CategoryId id : now)
      if (std::find(before.begin(), before.end(), id) == before.end()) current.push_back(id);
    r.sections.push_back(summarize("Previously Known", known, before));
    r.sections.push_back(summarize("Current Known", known, current));
    r.sections.push_back(summarize("Both", known, now));
  }
  if (unknown) {
    ReportSection s;
    s.name = "Unknown";
    s.ap = unknown->ap;
    s.ap50 = unknown->ap50;
    s.ar1 = unknown->ar1;
    s.per_class[kUnknownCategory] = *unknown;
    r.sections.push_back(s);
  }
  return r;
}

std::vector<InstanceTrack> random_proposals(const Dataset& dataset, const std::vector<VideoId>& videos,
                                            int per_video, std::uint64_t seed) {
  std::vector<InstanceTrack> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::int64_t next_id = 1;
  for (VideoId vid : videos) {
    const auto& info = dataset.videos.at(vid);
    for (int k = 0; k < per_video; ++k) {
      InstanceTrack t;
      t.id = next_id++;
      t.video_id = vid;
      t.category_id = kUnknownCategory;
      t.score = unit(rng);
      const double w = 0.1 + 0.4 * unit(rng), h = 0.1 + 0.4 * unit(rng);
      const Box b{w / 2 + (1 - w) * unit(rng), h / 2 + (1 - h) * unit(rng), w, h};
      const Mask m = mask_from_box(b, info.height, info.width);
      for (int f = 0; f < info.length(); ++f) {
        t.masks.push_back(m);
        t.boxes.push_back(box_from_mask(m));
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace owvis
