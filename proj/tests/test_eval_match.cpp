#include "doctest.h"

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "owvis/config.hpp"
#include "owvis/error.hpp"
#include "owvis/eval.hpp"
#include "owvis/hungarian.hpp"

using namespace owvis;

namespace {

InstanceTrack track(VideoId vid, CategoryId cat, std::vector<Mask> masks, double score = 1.0) {
  InstanceTrack t;
  t.video_id = vid;
  t.category_id = cat;
  for (const auto& m : masks) t.boxes.push_back(box_from_mask(m));
  t.masks = std::move(masks);
  t.score = score;
  return t;
}

Mask rect(int h, int w, int r0, int c0, int r1, int c1) {
  Mask m(h, w);
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) m.at(r, c) = 1;
  return m;
}

}  // namespace

TEST_CASE("st_iou examples") {
  const Mask a = rect(8, 8, 0, 0, 4, 4);
  const Mask b = rect(8, 8, 4, 4, 8, 8);
  CHECK(st_iou(track(1, 1, {a, a}), track(1, 1, {a, a})) == 1.0);
  CHECK(st_iou(track(1, 1, {a}), track(1, 1, {b})) == 0.0);
  CHECK(st_iou(track(1, 1, {a, a}), track(1, 1, {a, Mask(8, 8)})) == doctest::Approx(0.5));
  CHECK(st_iou(track(1, 1, {Mask(8, 8)}), track(1, 1, {Mask(8, 8)})) == 0.0);
  CHECK_THROWS_AS(st_iou(track(1, 1, {a}), track(1, 1, {a, a})), ShapeError);
}

TEST_CASE("single prediction at IoU 0.9 gives AP 0.9") {
  // 10 x 10 gt, prediction covering 90 of its pixels.
  const Mask gt = rect(10, 10, 0, 0, 10, 10);
  const Mask pr = rect(10, 10, 0, 0, 9, 10);
  const ClassRegistry reg({1});
  const auto m = evaluate_known({track(1, 1, {pr}, 0.8)}, {track(1, 1, {gt})}, reg, EvalConfig{});
  CHECK(m.mean_ap == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(m.mean_ap50 == 1.0);
}

TEST_CASE("empty and perfect predictions") {
  const Mask a = rect(8, 8, 1, 1, 5, 5);
  const std::vector<InstanceTrack> gts = {track(1, 1, {a}), track(2, 2, {a})};
  const ClassRegistry reg({1, 2});
  const auto none = evaluate_known({}, gts, reg, EvalConfig{});
  CHECK(none.mean_ap == 0.0);
  CHECK(none.mean_ar1 == 0.0);
  const auto perfect = evaluate_known(gts, gts, reg, EvalConfig{});
  CHECK(perfect.mean_ap == 1.0);
  CHECK(perfect.mean_ar1 == 1.0);
  const auto unk = evaluate_unknown({track(1, 0, {a})}, {track(1, 4, {a})}, EvalConfig{});
  CHECK(unk.ap == 1.0);
}

TEST_CASE("unknown predictions on known objects are false positives") {
  const Mask known = rect(8, 8, 0, 0, 4, 4);
  const Mask future = rect(8, 8, 4, 4, 8, 8);
  const auto m = evaluate_unknown({track(1, 0, {known})}, {track(1, 5, {future})}, EvalConfig{});
  CHECK(m.ap == 0.0);
  CHECK(m.ar1 == 0.0);
}

TEST_CASE("evaluator matches the brute-force reference") {
  std::mt19937_64 rng(2024);
  const EvalConfig cfg;
  auto random_mask = [&](int h, int w) {
    const int r0 = static_cast<int>(rng() % h), c0 = static_cast<int>(rng() % w);
    const int r1 = r0 + 1 + static_cast<int>(rng() % (h - r0)), c1 = c0 + 1 + static_cast<int>(rng() % (w - c0));
    return rect(h, w, r0, c0, r1, c1);
  };
  std::uniform_real_distribution<double> score(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int videos = 1 + static_cast<int>(rng() % 3);
    const int frames = 1 + static_cast<int>(rng() % 3);
    std::vector<InstanceTrack> gts, preds;
    for (int v = 0; v < videos; ++v) {
      const int ng = static_cast<int>(rng() % 5), np = static_cast<int>(rng() % 5);
      std::vector<Mask> base;
      for (int g = 0; g < ng; ++g) {
        std::vector<Mask> ms;
        for (int f = 0; f < frames; ++f) ms.push_back(random_mask(6, 6));
        gts.push_back(track(v, 1, ms));
      }
      for (int p = 0; p < np; ++p) {
        std::vector<Mask> ms;
        // Half of the predictions perturb a gt so that matches occur.
        const bool near = ng > 0 && rng() % 2 == 0;
        const auto& src = near ? gts[gts.size() - 1 - rng() % ng].masks : std::vector<Mask>{};
        for (int f = 0; f < frames; ++f) {
          Mask m = near ? src[f] : random_mask(6, 6);
          if (near) m.at(static_cast<int>(rng() % 6), static_cast<int>(rng() % 6)) ^= 1;
          ms.push_back(m);
        }
        preds.push_back(track(v, 1, ms, score(rng)));
      }
    }
    const auto lib = evaluate_known(preds, gts, ClassRegistry({1}), cfg);
    const auto ref = oracle::evaluate_class(preds, gts, cfg.iou_thresholds, cfg.max_dets_ap, cfg.max_dets_ar);
    if (gts.empty()) {
      CHECK(lib.per_class.empty());
      continue;
    }
    CHECK(lib.mean_ap == ref.ap);
    CHECK(lib.mean_ar1 == ref.ar1);
    std::vector<InstanceTrack> unk = preds;
    for (auto& p : unk) p.category_id = 0;
    const auto u = evaluate_unknown(unk, gts, cfg);
    CHECK(u.ap == ref.ap);
    CHECK(u.ar1 == ref.ar1);
  }
}

TEST_CASE("raising true-positive scores never lowers AP") {
  const Mask a = rect(8, 8, 0, 0, 4, 4), b = rect(8, 8, 4, 4, 8, 8), c = rect(8, 8, 0, 4, 4, 8);
  std::vector<InstanceTrack> gts = {track(1, 1, {a}), track(1, 1, {b})};
  std::vector<InstanceTrack> preds = {track(1, 1, {a}, 0.3), track(1, 1, {c}, 0.6), track(1, 1, {b}, 0.2)};
  const ClassRegistry reg({1});
  double prev = evaluate_known(preds, gts, reg, EvalConfig{}).mean_ap;
  for (double bump : {0.1, 0.2, 0.5}) {
    auto p = preds;
    p[0].score += bump;
    p[2].score += bump;
    const double ap = evaluate_known(p, gts, reg, EvalConfig{}).mean_ap;
    CHECK(ap >= prev);
    prev = ap;
  }
}

TEST_CASE("report layout") {
  KnownMetrics km;
  for (CategoryId id : {1, 2, 3, 4, 5}) {
    ClassMetrics m;
    m.ap = id / 10.0;
    m.ap50 = id / 5.0;
    m.num_gt = 1;
    km.per_class[id] = m;
  }
  const EvalReport r2 = build_report(2, km, std::nullopt, {{1, 2, 3}, {1, 2, 3, 4, 5}});
  REQUIRE(r2.section("Previously Known"));
  REQUIRE(r2.section("Current Known"));
  REQUIRE(r2.section("Both"));
  CHECK(r2.section("Previously Known")->ap == doctest::Approx(0.2));
  CHECK(r2.section("Current Known")->ap == doctest::Approx(0.45));
  CHECK(r2.section("Both")->ap == doctest::Approx(0.3));
  KnownMetrics k1;
  k1.per_class = {{1, km.per_class[1]}, {2, km.per_class[2]}, {3, km.per_class[3]}};
  const EvalReport r1 = build_report(1, k1, ClassMetrics{}, {{1, 2, 3}});
  CHECK(r1.section("Known"));
  CHECK(r1.section("Unknown"));
  CHECK(r1.to_table().find("AR-1") != std::string::npos);
}

TEST_CASE("Hungarian small cases") {
  CostMatrix c(2, 2);
  c.at(0, 0) = 1; c.at(0, 1) = 2; c.at(1, 0) = 2; c.at(1, 1) = 1;
  MatchResult m = solve_assignment(c);
  CHECK(m.assignment == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
  CHECK(m.cost == 2.0);
  CostMatrix flat(2, 2, 1.0);
  CHECK(solve_assignment(flat).assignment == std::vector<std::pair<int, int>>{{0, 0}, {1, 1}});
  CostMatrix one(1, 1, 0.7);
  CHECK(solve_assignment(one).assignment == std::vector<std::pair<int, int>>{{0, 0}});
  CHECK_THROWS_AS(solve_assignment(CostMatrix(1, 2)), ConfigError);
}

TEST_CASE("Hungarian equals brute force") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int rows = 1 + static_cast<int>(rng() % 8);
    const int cols = 1 + static_cast<int>(rng() % rows);
    CostMatrix c(rows, cols);
    std::vector<std::vector<double>> dense(rows, std::vector<double>(cols));
    const bool integer = trial % 3 == 0;  // integer costs create ties
    for (int r = 0; r < rows; ++r)
      for (int k = 0; k < cols; ++k) c.at(r, k) = dense[r][k] = integer ? std::floor(u(rng) / 3) : u(rng);
    const MatchResult m = solve_assignment(c);
    CHECK(m.cost == doctest::Approx(oracle::brute_assignment(dense)).epsilon(1e-12));
    std::set<int> qs, gs;
    for (auto [q, g] : m.assignment) {
      qs.insert(q);
      gs.insert(g);
    }
    CHECK(qs.size() == static_cast<std::size_t>(cols));
    CHECK(gs.size() == static_cast<std::size_t>(cols));
    CHECK(solve_assignment(c).assignment == m.assignment);
  }
}

TEST_CASE("run config") {
  RunConfig c;
  CHECK(c.model.q == 300);
  CHECK(c.model.d == 256);
  CHECK(c.model.enc_layers == 6);
  CHECK(c.model.dec_layers == 6);
  CHECK(c.schedule.learning_rate == 1e-4);
  CHECK(c.schedule.task1_epochs == 18);
  CHECK(c.schedule.task2_epochs == 12);
  CHECK(c.schedule.finetune_epochs == 2);
  const RunConfig back = RunConfig::from_json(c.to_json());
  CHECK(back.fingerprint() == c.fingerprint());
  nlohmann::json doc = c.to_json();
  apply_override(doc, "model.q=10");
  apply_override(doc, "sto.pseudo_source=backbone");
  const RunConfig o = RunConfig::from_json(doc);
  CHECK(o.model.q == 10);
  CHECK(o.sto.pseudo_source == "backbone");
  CHECK(o.fingerprint() != c.fingerprint());
  RunConfig paths = c;
  paths.data.annotations = "elsewhere.json";
  CHECK(paths.fingerprint() == c.fingerprint());
  apply_override(doc, "model.heads=7");
  CHECK_THROWS_AS(RunConfig::from_json(doc), ConfigError);
  CHECK_THROWS_AS(apply_override(doc, "novalue"), ConfigError);
}
