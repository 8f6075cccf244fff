#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <vector>

#include "owvis/config.hpp"
#include "owvis/data_model.hpp"
#include "owvis/model.hpp"

namespace owvis {

/// Blends a [0, 1] map (resized nearest-neighbour) over the frame as a
/// blue-to-red heat colour.
RgbImage heatmap_overlay(const RgbImage& frame, const torch::Tensor& map);

/// Tints every track's mask with its own colour; unknown tracks are white.
RgbImage mask_overlay(const RgbImage& frame, const std::vector<InstanceTrack>& tracks, int frame_index);

/// Runs the model on one video and writes objectness_<f>.png, masks_<f>.png
/// and objectness.json (map values and per-query scores) into `out_dir`.
void write_visualizations(OwVisModel& model, const VideoInfo& video, const std::vector<RgbImage>& frames,
                          const ProtocolConfig& config, const std::filesystem::path& out_dir);

}  // namespace owvis
