#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "owvis/geometry.hpp"

namespace owvis::rle {

// COCO run-length encoding: column-major scan, alternating runs that start
// with background.

std::vector<std::uint32_t> encode(const Mask& mask);
Mask decode(const std::vector<std::uint32_t>& counts, int height, int width);

/// Compact ASCII form used by pycocotools and YouTube-VIS files.
std::string counts_to_string(const std::vector<std::uint32_t>& counts);
std::vector<std::uint32_t> counts_from_string(std::string_view s);

}  // namespace owvis::rle
