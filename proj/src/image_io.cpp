#include "owvis/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "owvis/error.hpp"

namespace owvis {

void write_png(const RgbImage& image, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::vector<png_byte> buf(static_cast<std::size_t>(3) * image.height * image.width);
  for (int r = 0; r < image.height; ++r)
    for (int c = 0; c < image.width; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const float v = std::clamp(image.at(ch, r, c), 0.0f, 1.0f);
        buf[(static_cast<std::size_t>(r) * image.width + c) * 3 + ch] =
            static_cast<png_byte>(std::lround(v * 255.0f));
      }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw Error("cannot write " + path.string() + ": " + img.message);
}

RgbImage read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw Error("cannot read " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw Error("cannot decode " + path.string() + ": " + img.message);
  }
  RgbImage out(static_cast<int>(img.height), static_cast<int>(img.width));
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c)
      for (int ch = 0; ch < 3; ++ch)
        out.at(ch, r, c) = buf[(static_cast<std::size_t>(r) * out.width + c) * 3 + ch] / 255.0f;
  return out;
}

namespace {

RgbImage pad_image(const RgbImage& src, int height, int width) {
  if (src.height == height && src.width == width) return src;
  if (src.height > height || src.width > width) throw ShapeError("frame larger than the video resolution");
  RgbImage out(height, width);
  const int top = (height - src.height) / 2, left = (width - src.width) / 2;
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < src.height; ++r)
      for (int c = 0; c < src.width; ++c) out.at(ch, r + top, c + left) = src.at(ch, r, c);
  return out;
}

}  // namespace

FrameTable load_frames(const Dataset& dataset) {
  FrameTable table;
  for (const auto& [id, info] : dataset.videos) {
    auto& frames = table[id];
    for (const auto& name : info.file_names)
      frames.push_back(pad_image(read_png(dataset.image_root / name), info.height, info.width));
  }
  return table;
}

}  // namespace owvis
