#pragma once

#include <cstdint>
#include <vector>

namespace owvis {

/// Axis-aligned box in normalized center format (cx, cy, w, h) in [0, 1].
/// The all-zero box marks a frame where the object is absent.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool is_empty() const { return cx == 0.0 && cy == 0.0 && w == 0.0 && h == 0.0; }
  friend bool operator==(const Box&, const Box&) = default;
};

/// Row-major binary mask.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  std::int64_t area() const;
  bool is_empty() const { return area() == 0; }

  friend bool operator==(const Mask&, const Mask&) = default;
};

Box box_from_mask(const Mask& mask);

/// Rasterizes the pixels whose centers fall inside the box.
Mask mask_from_box(const Box& box, int height, int width);

/// Center-pads a mask with zeros to the requested size.
Mask pad_mask(const Mask& mask, int height, int width);

double box_l1(const Box& a, const Box& b);
double generalized_iou(const Box& a, const Box& b);

/// Half-open cell ranges [row0,row1) x [col0,col1) that a normalized box covers
/// on a map_h x map_w grid. Edges map by floor(lo * S) and ceil(hi * S), are
/// clipped to the grid, and collapse to the nearest cell when nothing is left.
/// `absent` is set for the all-zero box, which covers nothing.
struct CellRange {
  int row0 = 0;
  int row1 = 0;
  int col0 = 0;
  int col1 = 0;
  bool absent = false;

  int cell_count() const { return absent ? 0 : (row1 - row0) * (col1 - col0); }
};

CellRange box_cell_range(const Box& box, int map_h, int map_w);

}  // namespace owvis
