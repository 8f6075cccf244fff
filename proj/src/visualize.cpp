#include "owvis/visualize.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

#include "owvis/annotations.hpp"
#include "owvis/image_io.hpp"
#include "owvis/protocol.hpp"
#include "owvis/sto.hpp"

namespace owvis {

namespace {

std::array<float, 3> heat(float v) {
  v = std::clamp(v, 0.0f, 1.0f);
  return {std::clamp(2.0f * v - 0.5f, 0.0f, 1.0f), 1.0f - std::abs(2.0f * v - 1.0f), std::clamp(1.5f - 2.0f * v, 0.0f, 1.0f)};
}

const std::array<std::array<float, 3>, 6> kPalette = {{{0.95f, 0.3f, 0.3f},
                                                       {0.3f, 0.9f, 0.35f},
                                                       {0.3f, 0.5f, 0.95f},
                                                       {0.95f, 0.8f, 0.2f},
                                                       {0.8f, 0.35f, 0.9f},
                                                       {0.2f, 0.85f, 0.85f}}};

std::string numbered(const char* stem, int f) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.png", stem, f);
  return buf;
}

}  // namespace

RgbImage heatmap_overlay(const RgbImage& frame, const torch::Tensor& map) {
  const auto m = map.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  const auto a = m.accessor<float, 2>();
  const int64_t mh = m.size(0), mw = m.size(1);
  RgbImage out(frame.height, frame.width);
  for (int r = 0; r < frame.height; ++r)
    for (int c = 0; c < frame.width; ++c) {
      const auto color = heat(a[r * mh / frame.height][c * mw / frame.width]);
      for (int ch = 0; ch < 3; ++ch) out.at(ch, r, c) = 0.4f * frame.at(ch, r, c) + 0.6f * color[static_cast<std::size_t>(ch)];
    }
  return out;
}

RgbImage mask_overlay(const RgbImage& frame, const std::vector<InstanceTrack>& tracks, int frame_index) {
  RgbImage out = frame;
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const auto& t = tracks[i];
    if (frame_index >= t.frame_count()) continue;
    const Mask& m = t.masks[static_cast<std::size_t>(frame_index)];
    const std::array<float, 3> color =
        t.category_id == kUnknownCategory ? std::array<float, 3>{1.0f, 1.0f, 1.0f} : kPalette[i % kPalette.size()];
    for (int r = 0; r < std::min(m.height, frame.height); ++r)
      for (int c = 0; c < std::min(m.width, frame.width); ++c)
        if (m.at(r, c))
          for (int ch = 0; ch < 3; ++ch)
            out.at(ch, r, c) = 0.45f * out.at(ch, r, c) + 0.55f * color[static_cast<std::size_t>(ch)];
  }
  return out;
}

void write_visualizations(OwVisModel& model, const VideoInfo& video, const std::vector<RgbImage>& frames,
                          const ProtocolConfig& config, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto tracks = predict_video(model, video, frames, config);

  torch::NoGradGuard guard;
  model->eval();
  const auto dtype = model->parameters().front().scalar_type();
  const auto out = model->forward(clip_tensor(make_clip(video.id, frames, 0, static_cast<int>(frames.size())), dtype));
  const auto scores = objectness_score(out.objectness_map, out.branches.boxes).to(torch::kFloat64).contiguous();

  nlohmann::json maps = nlohmann::json::array();
  for (int f = 0; f < static_cast<int>(frames.size()); ++f) {
    const auto map = out.objectness_map[f];
    write_png(heatmap_overlay(frames[static_cast<std::size_t>(f)], map), out_dir / numbered("objectness", f));
    write_png(mask_overlay(frames[static_cast<std::size_t>(f)], tracks, f), out_dir / numbered("masks", f));
    const auto m = map.to(torch::kFloat64).contiguous();
    std::vector<std::vector<double>> rows;
    for (int64_t r = 0; r < m.size(0); ++r)
      rows.emplace_back(m[r].data_ptr<double>(), m[r].data_ptr<double>() + m.size(1));
    maps.push_back(rows);
  }
  const nlohmann::json dump = {
      {"video_id", video.id},
      {"objectness_map", maps},
      {"query_scores", std::vector<double>(scores.data_ptr<double>(), scores.data_ptr<double>() + scores.numel())}};
  write_text_file(out_dir / "objectness.json", dump.dump(1));
}

}  // namespace owvis
