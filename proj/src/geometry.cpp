#include "owvis/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace owvis {

std::int64_t Mask::area() const {
  return std::accumulate(data.begin(), data.end(), std::int64_t{0},
                         [](std::int64_t acc, std::uint8_t v) { return acc + (v != 0 ? 1 : 0); });
}

Box box_from_mask(const Mask& mask) {
  int r0 = mask.height, r1 = -1, c0 = mask.width, c1 = -1;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (mask.at(r, c) == 0) continue;
      r0 = std::min(r0, r);
      r1 = std::max(r1, r);
      c0 = std::min(c0, c);
      c1 = std::max(c1, c);
    }
  }
  if (r1 < 0) return {};
  const double W = mask.width, H = mask.height;
  const double x0 = c0, x1 = c1 + 1.0, y0 = r0, y1 = r1 + 1.0;
  return {(x0 + x1) / (2.0 * W), (y0 + y1) / (2.0 * H), (x1 - x0) / W, (y1 - y0) / H};
}

Mask mask_from_box(const Box& box, int height, int width) {
  Mask m(height, width);
  if (box.is_empty()) return m;
  const double x0 = (box.cx - box.w / 2) * width, x1 = (box.cx + box.w / 2) * width;
  const double y0 = (box.cy - box.h / 2) * height, y1 = (box.cy + box.h / 2) * height;
  for (int r = 0; r < height; ++r) {
    const double yc = r + 0.5;
    if (yc < y0 || yc > y1) continue;
    for (int c = 0; c < width; ++c) {
      const double xc = c + 0.5;
      if (xc >= x0 && xc <= x1) m.at(r, c) = 1;
    }
  }
  return m;
}

Mask pad_mask(const Mask& mask, int height, int width) {
  if (mask.height == height && mask.width == width) return mask;
  Mask out(height, width);
  const int top = (height - mask.height) / 2;
  const int left = (width - mask.width) / 2;
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c) out.at(r + top, c + left) = mask.at(r, c);
  return out;
}

double box_l1(const Box& a, const Box& b) {
  return (std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) + std::abs(a.w - b.w) + std::abs(a.h - b.h)) / 4.0;
}

double generalized_iou(const Box& a, const Box& b) {
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2, ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2, by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  const double cw = std::max(ax1, bx1) - std::min(ax0, bx0);
  const double ch = std::max(ay1, by1) - std::min(ay0, by0);
  const double hull = cw * ch;
  if (uni <= 0.0 || hull <= 0.0) return 0.0;
  return inter / uni - (hull - uni) / hull;
}

namespace {

// Returns [lo, hi) on an n-cell axis for the normalized interval [a, b].
std::pair<int, int> axis_range(double a, double b, double center, int n) {
  int lo = static_cast<int>(std::floor(a * n));
  int hi = static_cast<int>(std::ceil(b * n));
  lo = std::clamp(lo, 0, n);
  hi = std::clamp(hi, 0, n);
  if (hi <= lo) {
    const int c = std::clamp(static_cast<int>(std::floor(center * n)), 0, n - 1);
    return {c, c + 1};
  }
  return {lo, hi};
}

}  // namespace

CellRange box_cell_range(const Box& box, int map_h, int map_w) {
  CellRange r;
  if (box.is_empty()) {
    r.absent = true;
    return r;
  }
  std::tie(r.col0, r.col1) = axis_range(box.cx - box.w / 2, box.cx + box.w / 2, box.cx, map_w);
  std::tie(r.row0, r.row1) = axis_range(box.cy - box.h / 2, box.cy + box.h / 2, box.cy, map_h);
  return r;
}

}  // namespace owvis
