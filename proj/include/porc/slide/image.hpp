// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace porc::slide {

/// Interleaved 8-bit RGB raster, row-major.
struct RgbImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::uint32_t w, std::uint32_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

  bool empty() const { return width == 0 || height == 0; }
  std::size_t index(std::uint32_t x, std::uint32_t y) const { return (static_cast<std::size_t>(y) * width + x) * 3; }
  std::uint8_t at(std::uint32_t x, std::uint32_t y, int c) const { return pixels[index(x, y) + c]; }
  void set(std::uint32_t x, std::uint32_t y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const auto i = index(x, y);
    pixels[i] = r;
    pixels[i + 1] = g;
    pixels[i + 2] = b;
  }
  void fill_rect(std::uint32_t x0, std::uint32_t y0, std::uint32_t w, std::uint32_t h, std::uint8_t r,
                 std::uint8_t g, std::uint8_t b);

  bool operator==(const RgbImage&) const = default;
};

RgbImage crop(const RgbImage& src, std::uint32_t x, std::uint32_t y, std::uint32_t w, std::uint32_t h);

}  // namespace porc::slide
