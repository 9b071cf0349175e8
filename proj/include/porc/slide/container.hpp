// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "porc/slide/image.hpp"

namespace porc::slide {

enum class Magnification { x20, x10 };

const char* to_string(Magnification m);
Magnification magnification_from_string(const std::string& s);

/// Tiled slide file.
///
/// Layout, all integers little-endian:
///   "PTHS" | u32 version=1 | u32 width | u32 height | u32 tile_size | u8 pixel_format=0
///   then tiles in row-major tile order, each tile_size*tile_size*3 bytes of RGB8.
/// width and height are the padded dimensions; padding pixels are white.
class SlideContainer {
 public:
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kHeaderBytes = 21;

  static SlideContainer from_image(const RgbImage& image, std::uint32_t tile_size, std::string id = "slide");
  static SlideContainer parse(const std::vector<std::uint8_t>& bytes, std::string id = "slide");
  static SlideContainer read(const std::filesystem::path& path);

  std::vector<std::uint8_t> serialize() const;
  void write(const std::filesystem::path& path) const;

  std::uint32_t width() const { return width_; }
  std::uint32_t height() const { return height_; }
  std::uint32_t tile_size() const { return tile_size_; }
  std::uint32_t tiles_x() const { return width_ / tile_size_; }
  std::uint32_t tiles_y() const { return height_ / tile_size_; }
  std::size_t tile_count() const { return static_cast<std::size_t>(tiles_x()) * tiles_y(); }
  std::size_t tile_bytes() const { return static_cast<std::size_t>(tile_size_) * tile_size_ * 3; }

  const std::string& id() const { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }
  Magnification magnification() const { return mag_; }
  void set_magnification(Magnification m) { mag_ = m; }

  RgbImage read_tile(std::uint32_t tx, std::uint32_t ty) const;
  std::uint8_t pixel(std::uint32_t x, std::uint32_t y, int channel) const;
  RgbImage region(std::uint32_t x, std::uint32_t y, std::uint32_t w, std::uint32_t h) const;
  RgbImage to_image() const;

 private:
  std::string id_ = "slide";
  Magnification mag_ = Magnification::x20;
  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::uint32_t tile_size_ = 0;
  std::vector<std::uint8_t> tiles_;
};

/// 2x2 box mean per channel, rounded half-up; result tagged 10x.
SlideContainer downsample_2x(const SlideContainer& slide);

}  // namespace porc::slide
