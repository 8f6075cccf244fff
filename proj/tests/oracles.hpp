#pragma once

// Reference implementations used only by tests. They are written with plain
// loops and share no code with the library beyond the data types.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "owvis/data_model.hpp"

namespace oracle {

// Per-frame map stored frame-major: map[m][r][c].
using Map3 = std::vector<std::vector<std::vector<double>>>;

// Box-averaged objectness by visiting every cell of every frame and testing membership.
inline double objectness_score(const Map3& map, const std::vector<owvis::Box>& boxes) {
  double s = 0.0;
  for (std::size_t m = 0; m < map.size(); ++m) {
    const owvis::Box& b = boxes[m];
    if (b.cx == 0 && b.cy == 0 && b.w == 0 && b.h == 0) continue;
    const int h = static_cast<int>(map[m].size());
    const int w = static_cast<int>(map[m][0].size());
    auto inside = [](int cell, double lo, double hi, int n) {
      return cell >= std::floor(lo * n) && cell < std::ceil(hi * n);
    };
    std::vector<bool> rows(h), cols(w);
    int nr = 0, nc = 0;
    for (int r = 0; r < h; ++r) nr += (rows[r] = inside(r, b.cy - b.h / 2, b.cy + b.h / 2, h));
    for (int c = 0; c < w; ++c) nc += (cols[c] = inside(c, b.cx - b.w / 2, b.cx + b.w / 2, w));
    if (nr == 0) {
      int r = static_cast<int>(std::floor(b.cy * h));
      rows[std::min(std::max(r, 0), h - 1)] = true;
    }
    if (nc == 0) {
      int c = static_cast<int>(std::floor(b.cx * w));
      cols[std::min(std::max(c, 0), w - 1)] = true;
    }
    double sum = 0.0;
    int count = 0;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        if (rows[r] && cols[c]) {
          sum += map[m][r][c];
          ++count;
        }
    s += sum / count;
  }
  return s;
}

// Minimum total over all injective column -> row assignments.
inline double brute_assignment(const std::vector<std::vector<double>>& cost) {
  const int rows = static_cast<int>(cost.size());
  const int cols = rows ? static_cast<int>(cost[0].size()) : 0;
  std::vector<int> perm(rows);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int c = 0; c < cols; ++c) total += cost[perm[c]][c];
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline double st_iou(const owvis::InstanceTrack& a, const owvis::InstanceTrack& b) {
  long inter = 0, uni = 0;
  for (std::size_t f = 0; f < a.masks.size(); ++f)
    for (int r = 0; r < a.masks[f].height; ++r)
      for (int c = 0; c < a.masks[f].width; ++c) {
        const bool x = a.masks[f].at(r, c), y = b.masks[f].at(r, c);
        if (x && y) ++inter;
        if (x || y) ++uni;
      }
  return uni ? static_cast<double>(inter) / uni : 0.0;
}

struct ClassResult {
  double ap = 0.0;
  double ar1 = 0.0;
};

// Single-class evaluator. Detections are consumed one at a time by picking the
// highest remaining score (earliest video, then earliest position on ties);
// each picks the untaken gt of its video with the largest IoU above the
// threshold. AP uses 101 recall points, each taking the best precision at any
// recall at or above it.
inline ClassResult evaluate_class(const std::vector<owvis::InstanceTrack>& preds,
                                  const std::vector<owvis::InstanceTrack>& gts, const std::vector<double>& thresholds,
                                  int max_dets_ap, int max_dets_ar) {
  ClassResult out;
  if (gts.empty()) return out;

  auto run = [&](double thr, int max_dets, double& ap, double& recall_final) {
    std::vector<bool> gt_taken(gts.size(), false);
    std::vector<bool> consumed(preds.size(), false);
    std::vector<std::pair<double, bool>> scored;  // per-video order first
    std::map<owvis::VideoId, bool> any;
    for (const auto& p : preds) any[p.video_id] = true;
    for (const auto& [vid, unused] : any) {
      int picked = 0;
      while (picked < max_dets) {
        int best = -1;
        for (std::size_t i = 0; i < preds.size(); ++i) {
          if (consumed[i] || preds[i].video_id != vid) continue;
          if (best < 0 || preds[i].score > preds[static_cast<std::size_t>(best)].score) best = static_cast<int>(i);
        }
        if (best < 0) break;
        consumed[static_cast<std::size_t>(best)] = true;
        ++picked;
        double best_iou = std::min(thr, 1.0 - 1e-10);
        int match = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
          if (gts[g].video_id != vid || gt_taken[g]) continue;
          const double iou = st_iou(preds[static_cast<std::size_t>(best)], gts[g]);
          if (iou >= best_iou) {
            best_iou = iou;
            match = static_cast<int>(g);
          }
        }
        if (match >= 0) gt_taken[static_cast<std::size_t>(match)] = true;
        scored.push_back({preds[static_cast<std::size_t>(best)].score, match >= 0});
      }
    }
    // Order by score descending; equal scores keep their video-major order.
    std::vector<std::pair<double, bool>> ordered;
    std::vector<bool> done(scored.size(), false);
    for (std::size_t k = 0; k < scored.size(); ++k) {
      int best = -1;
      for (std::size_t i = 0; i < scored.size(); ++i)
        if (!done[i] && (best < 0 || scored[i].first > scored[static_cast<std::size_t>(best)].first))
          best = static_cast<int>(i);
      done[static_cast<std::size_t>(best)] = true;
      ordered.push_back(scored[static_cast<std::size_t>(best)]);
    }
    std::vector<double> rec, prec;
    double tp = 0, fp = 0;
    for (const auto& [s, hit] : ordered) {
      if (hit) tp += 1; else fp += 1;
      rec.push_back(tp / static_cast<double>(gts.size()));
      prec.push_back(tp / (tp + fp));
    }
    double sum = 0.0;
    for (int k = 0; k <= 100; ++k) {
      double best = 0.0;
      bool found = false;
      for (std::size_t i = 0; i < rec.size(); ++i)
        if (rec[i] >= k / 100.0) {
          best = found ? std::max(best, prec[i]) : prec[i];
          found = true;
        }
      sum += best;
    }
    ap = ordered.empty() ? 0.0 : sum / 101.0;
    recall_final = rec.empty() ? 0.0 : rec.back();
  };

  double ap_sum = 0.0, ar_sum = 0.0;
  for (double thr : thresholds) {
    double ap = 0, rec = 0, ap_unused = 0, rec1 = 0;
    run(thr, max_dets_ap, ap, rec);
    run(thr, max_dets_ar, ap_unused, rec1);
    ap_sum += ap;
    ar_sum += rec1;
  }
  out.ap = ap_sum / static_cast<double>(thresholds.size());
  out.ar1 = ar_sum / static_cast<double>(thresholds.size());
  return out;
}

}  // namespace oracle
