#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "owvis/annotations.hpp"
#include "owvis/error.hpp"
#include "owvis/image_io.hpp"
#include "owvis/rle.hpp"
#include "owvis/synthdata.hpp"

using namespace owvis;
using nlohmann::json;

namespace {

json minimal_doc() {
  Mask m(16, 16);
  for (int r = 4; r < 8; ++r)
    for (int c = 2; c < 6; ++c) m.at(r, c) = 1;
  const json seg = {{"size", {16, 16}}, {"counts", rle::counts_to_string(rle::encode(m))}};
  return {{"videos", {{{"id", 1}, {"height", 16}, {"width", 16}, {"file_names", {"a.png", "b.png", "c.png"}}}}},
          {"categories", {{{"id", 3}, {"name", "dog"}, {"supercategory", "Animals"}}}},
          {"annotations",
           {{{"id", 5}, {"video_id", 1}, {"category_id", 3}, {"segmentations", {seg, seg, nullptr}},
             {"bboxes", {{2, 4, 4, 4}, {2, 4, 4, 4}, nullptr}}}}}};
}

}  // namespace

TEST_CASE("minimal annotation file") {
  const Dataset ds = parse_annotations(minimal_doc(), ".");
  REQUIRE(ds.videos.size() == 1);
  REQUIRE(ds.track_count() == 1);
  const InstanceTrack& t = ds.annotations.at(1).front();
  CHECK(t.frame_count() == 3);
  CHECK(t.masks[0].height == 16);
  CHECK(t.masks[0].area() == 16);
  CHECK(t.boxes[0].w == doctest::Approx(0.25));
  // The null frame is an empty mask with the all-zero box.
  CHECK(t.masks[2].is_empty());
  CHECK(t.boxes[2].is_empty());
}

TEST_CASE("missing key is named") {
  json doc = minimal_doc();
  doc["annotations"][0].erase("video_id");
  try {
    parse_annotations(doc, ".");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("video_id") != std::string::npos);
  }
}

TEST_CASE("box/mask frame count mismatch names video and instance") {
  json doc = minimal_doc();
  doc["annotations"][0]["bboxes"].erase(2);
  try {
    parse_annotations(doc, ".");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("video 1") != std::string::npos);
    CHECK(msg.find("instance 5") != std::string::npos);
  }
}

TEST_CASE("unknown category reference") {
  json doc = minimal_doc();
  doc["annotations"][0]["category_id"] = 99;
  CHECK_THROWS_AS(parse_annotations(doc, "."), ValidationError);
}

TEST_CASE("resolutions are padded to multiples of 16") {
  json doc = minimal_doc();
  doc["videos"][0]["height"] = 20;
  doc["videos"][0]["width"] = 30;
  Mask m(20, 30);
  m.at(0, 0) = 1;
  const json seg = {{"size", {20, 30}}, {"counts", rle::encode(m)}};
  doc["annotations"][0]["segmentations"] = {seg, seg, seg};
  doc["annotations"][0].erase("bboxes");
  const Dataset ds = parse_annotations(doc, ".");
  const VideoInfo& v = ds.videos.at(1);
  CHECK(v.height == 32);
  CHECK(v.width == 32);
  CHECK(v.source_height == 20);
  CHECK(ds.annotations.at(1)[0].masks[0].height == 32);
  CHECK(ds.annotations.at(1)[0].masks[0].area() == 1);
}

TEST_CASE("annotation and prediction files round trip") {
  SynthConfig cfg = desk_synth_config();
  cfg.num_videos = 3;
  const SynthOutput out = generate(cfg);
  const Dataset again = parse_annotations(annotations_to_json(out.dataset), ".");
  for (const auto& [vid, tracks] : out.dataset.annotations) {
    REQUIRE(again.annotations.at(vid).size() == tracks.size());
    for (std::size_t i = 0; i < tracks.size(); ++i) {
      CHECK(again.annotations.at(vid)[i].masks == tracks[i].masks);
      CHECK(again.annotations.at(vid)[i].category_id == tracks[i].category_id);
    }
  }
  std::vector<InstanceTrack> preds;
  for (const auto& [vid, tracks] : out.dataset.annotations)
    for (auto t : tracks) {
      t.score = 0.25;
      preds.push_back(t);
    }
  const auto parsed = parse_predictions(predictions_to_json(preds), out.dataset);
  REQUIRE(parsed.size() == preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CHECK(parsed[i].masks == preds[i].masks);
    CHECK(parsed[i].score == preds[i].score);
  }
}

TEST_CASE("PNG round trip is exact for generated frames") {
  SynthConfig cfg = desk_synth_config();
  cfg.num_videos = 1;
  const SynthOutput out = generate(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "owvis_png_test";
  std::filesystem::create_directories(dir);
  const RgbImage& img = out.frames.at(out.dataset.videos.begin()->first).front();
  write_png(img, dir / "f.png");
  const RgbImage back = read_png(dir / "f.png");
  CHECK(back.height == img.height);
  CHECK(back.data == img.data);
  std::filesystem::remove_all(dir);
}
