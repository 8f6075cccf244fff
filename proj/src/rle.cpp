#include "owvis/rle.hpp"

#include "owvis/error.hpp"

namespace owvis::rle {

std::vector<std::uint32_t> encode(const Mask& mask) {
  std::vector<std::uint32_t> counts;
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (int c = 0; c < mask.width; ++c) {
    for (int r = 0; r < mask.height; ++r) {
      const std::uint8_t v = mask.at(r, c) != 0 ? 1 : 0;
      if (v != current) {
        counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  counts.push_back(run);
  return counts;
}

Mask decode(const std::vector<std::uint32_t>& counts, int height, int width) {
  Mask m(height, width);
  const std::size_t total = static_cast<std::size_t>(height) * width;
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (std::uint32_t run : counts) {
    if (pos + run > total) throw ParseError("RLE counts exceed mask size");
    for (std::uint32_t k = 0; k < run; ++k, ++pos) {
      if (value != 0) {
        const auto col = static_cast<int>(pos / static_cast<std::size_t>(height));
        const auto row = static_cast<int>(pos % static_cast<std::size_t>(height));
        m.at(row, col) = 1;
      }
    }
    value ^= 1;
  }
  if (pos != total) throw ParseError("RLE counts do not cover the mask");
  return m;
}

std::string counts_to_string(const std::vector<std::uint32_t>& counts) {
  std::string s;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    long long x = counts[i];
    if (i > 2) x -= static_cast<long long>(counts[i - 2]);
    bool more = true;
    while (more) {
      char c = static_cast<char>(x & 0x1f);
      x >>= 5;
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      s.push_back(static_cast<char>(c + 48));
    }
  }
  return s;
}

std::vector<std::uint32_t> counts_from_string(std::string_view s) {
  std::vector<std::uint32_t> counts;
  std::size_t p = 0;
  while (p < s.size()) {
    long long x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) throw ParseError("truncated RLE string");
      const long long c = static_cast<long long>(s[p]) - 48;
      x |= (c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1LL << (5 * k);
    }
    if (counts.size() > 2) x += counts[counts.size() - 2];
    if (x < 0) throw ParseError("negative run in RLE string");
    counts.push_back(static_cast<std::uint32_t>(x));
  }
  return counts;
}

}  // namespace owvis::rle
