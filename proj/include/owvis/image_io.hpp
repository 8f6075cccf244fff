#pragma once

#include <filesystem>

#include "owvis/data_model.hpp"

namespace owvis {

void write_png(const RgbImage& image, const std::filesystem::path& path);
RgbImage read_png(const std::filesystem::path& path);

/// Decodes every frame of every video, center-padding to the working
/// resolution recorded in the dataset.
FrameTable load_frames(const Dataset& dataset);

}  // namespace owvis
