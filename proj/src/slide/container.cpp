// SPDX-License-Identifier: Apache-2.0
#include "porc/slide/container.hpp"

#include <algorithm>
#include <cstring>

#include "porc/error.hpp"
#include "porc/util/binary_io.hpp"

namespace porc::slide {

void RgbImage::fill_rect(std::uint32_t x0, std::uint32_t y0, std::uint32_t w, std::uint32_t h, std::uint8_t r,
                         std::uint8_t g, std::uint8_t b) {
  const std::uint32_t x1 = std::min(width, x0 + w), y1 = std::min(height, y0 + h);
  for (std::uint32_t y = y0; y < y1; ++y)
    for (std::uint32_t x = x0; x < x1; ++x) set(x, y, r, g, b);
}

RgbImage crop(const RgbImage& src, std::uint32_t x, std::uint32_t y, std::uint32_t w, std::uint32_t h) {
  if (x + w > src.width || y + h > src.height) throw data_error("crop: rectangle outside image");
  RgbImage out(w, h);
  for (std::uint32_t r = 0; r < h; ++r) {
    std::memcpy(&out.pixels[out.index(0, r)], &src.pixels[src.index(x, y + r)], static_cast<std::size_t>(w) * 3);
  }
  return out;
}

const char* to_string(Magnification m) { return m == Magnification::x20 ? "20x" : "10x"; }

Magnification magnification_from_string(const std::string& s) {
  if (s == "20x") return Magnification::x20;
  if (s == "10x") return Magnification::x10;
  throw data_error("unknown magnification tag '" + s + "'");
}

namespace {

constexpr char kMagic[4] = {'P', 'T', 'H', 'S'};

bool valid_tile_size(std::uint32_t t) { return t == 64 || t == 128 || t == 256 || t == 512; }

std::uint32_t round_up(std::uint32_t v, std::uint32_t m) { return (v + m - 1) / m * m; }

// Tiles an image whose padded size is already a multiple of tile_size.
std::vector<std::uint8_t> tile_image(const RgbImage& image, std::uint32_t tile_size, std::uint32_t width,
                                     std::uint32_t height) {
  const std::uint32_t tx = width / tile_size, ty = height / tile_size;
  const std::size_t tb = static_cast<std::size_t>(tile_size) * tile_size * 3;
  std::vector<std::uint8_t> tiles(tb * tx * ty, 255);
  for (std::uint32_t j = 0; j < ty; ++j)
    for (std::uint32_t i = 0; i < tx; ++i) {
      std::uint8_t* dst = &tiles[(static_cast<std::size_t>(j) * tx + i) * tb];
      for (std::uint32_t r = 0; r < tile_size; ++r) {
        const std::uint32_t y = j * tile_size + r;
        if (y >= image.height) break;
        const std::uint32_t x0 = i * tile_size;
        if (x0 >= image.width) break;
        const std::uint32_t n = std::min(tile_size, image.width - x0);
        std::memcpy(dst + static_cast<std::size_t>(r) * tile_size * 3, &image.pixels[image.index(x0, y)],
                    static_cast<std::size_t>(n) * 3);
      }
    }
  return tiles;
}

}  // namespace

SlideContainer SlideContainer::from_image(const RgbImage& image, std::uint32_t tile_size, std::string id) {
  if (image.empty()) throw data_error("write_container: image is empty");
  if (!valid_tile_size(tile_size)) {
    throw data_error("write_container: tile_size must be one of 64, 128, 256, 512 (got " + std::to_string(tile_size) +
                     ")");
  }
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw data_error("write_container: pixel buffer does not match dimensions");
  }
  SlideContainer s;
  s.id_ = std::move(id);
  s.tile_size_ = tile_size;
  s.width_ = round_up(image.width, tile_size);
  s.height_ = round_up(image.height, tile_size);
  s.tiles_ = tile_image(image, tile_size, s.width_, s.height_);
  return s;
}

SlideContainer SlideContainer::parse(const std::vector<std::uint8_t>& bytes, std::string id) {
  io::Reader in(bytes.data(), bytes.size(), "slide container");
  if (std::memcmp(in.take(4), kMagic, 4) != 0) throw data_error("slide container: bad magic (expected PTHS)");
  const std::uint32_t version = in.u32();
  if (version != kVersion) throw data_error("slide container: unsupported version " + std::to_string(version));
  SlideContainer s;
  s.id_ = std::move(id);
  s.width_ = in.u32();
  s.height_ = in.u32();
  s.tile_size_ = in.u32();
  const std::uint8_t fmt = in.u8();
  if (fmt != 0) throw data_error("slide container: unsupported pixel format " + std::to_string(fmt));
  if (s.tile_size_ == 0 || s.width_ == 0 || s.height_ == 0 || s.width_ % s.tile_size_ != 0 ||
      s.height_ % s.tile_size_ != 0) {
    throw data_error("slide container: dimensions are not positive multiples of the tile size");
  }
  const std::size_t expected = s.tile_count() * s.tile_bytes();
  if (in.remaining() != expected) {
    throw data_error("slide container: payload is " + std::to_string(in.remaining()) + " bytes, expected " +
                     std::to_string(expected));
  }
  const std::uint8_t* p = in.take(expected);
  s.tiles_.assign(p, p + expected);
  return s;
}

SlideContainer SlideContainer::read(const std::filesystem::path& path) {
  return parse(io::read_file(path), path.stem().string());
}

std::vector<std::uint8_t> SlideContainer::serialize() const {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + tiles_.size());
  io::put_bytes(out, std::string_view(kMagic, 4));
  io::put_u32(out, kVersion);
  io::put_u32(out, width_);
  io::put_u32(out, height_);
  io::put_u32(out, tile_size_);
  io::put_u8(out, 0);
  out.insert(out.end(), tiles_.begin(), tiles_.end());
  return out;
}

void SlideContainer::write(const std::filesystem::path& path) const { io::write_file(path, serialize()); }

RgbImage SlideContainer::read_tile(std::uint32_t tx, std::uint32_t ty) const {
  if (tx >= tiles_x() || ty >= tiles_y()) throw data_error("read_tile: tile index out of range");
  RgbImage out(tile_size_, tile_size_);
  const std::size_t off = (static_cast<std::size_t>(ty) * tiles_x() + tx) * tile_bytes();
  std::memcpy(out.pixels.data(), &tiles_[off], tile_bytes());
  return out;
}

std::uint8_t SlideContainer::pixel(std::uint32_t x, std::uint32_t y, int channel) const {
  const std::uint32_t tx = x / tile_size_, ty = y / tile_size_;
  const std::uint32_t lx = x % tile_size_, ly = y % tile_size_;
  const std::size_t off = (static_cast<std::size_t>(ty) * tiles_x() + tx) * tile_bytes() +
                          (static_cast<std::size_t>(ly) * tile_size_ + lx) * 3 + channel;
  return tiles_[off];
}

RgbImage SlideContainer::region(std::uint32_t x, std::uint32_t y, std::uint32_t w, std::uint32_t h) const {
  if (x + w > width_ || y + h > height_) throw data_error("region: rectangle outside slide");
  RgbImage out(w, h);
  for (std::uint32_t r = 0; r < h; ++r) {
    const std::uint32_t yy = y + r;
    std::uint32_t c = 0;
    while (c < w) {
      const std::uint32_t xx = x + c;
      const std::uint32_t tx = xx / tile_size_, ty = yy / tile_size_;
      const std::uint32_t lx = xx % tile_size_, ly = yy % tile_size_;
      const std::uint32_t run = std::min(w - c, tile_size_ - lx);
      const std::size_t off = (static_cast<std::size_t>(ty) * tiles_x() + tx) * tile_bytes() +
                              (static_cast<std::size_t>(ly) * tile_size_ + lx) * 3;
      std::memcpy(&out.pixels[out.index(c, r)], &tiles_[off], static_cast<std::size_t>(run) * 3);
      c += run;
    }
  }
  return out;
}

RgbImage SlideContainer::to_image() const { return region(0, 0, width_, height_); }

SlideContainer downsample_2x(const SlideContainer& slide) {
  if (slide.width() % 2 != 0 || slide.height() % 2 != 0) {
    throw data_error("downsample_2x: slide dimensions must be even");
  }
  const RgbImage src = slide.to_image();
  RgbImage dst(src.width / 2, src.height / 2);
  for (std::uint32_t y = 0; y < dst.height; ++y)
    for (std::uint32_t x = 0; x < dst.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const unsigned s = src.at(2 * x, 2 * y, c) + src.at(2 * x + 1, 2 * y, c) + src.at(2 * x, 2 * y + 1, c) +
                           src.at(2 * x + 1, 2 * y + 1, c);
        dst.pixels[dst.index(x, y) + c] = static_cast<std::uint8_t>((s + 2) / 4);
      }
  // Keep the tile size when it still divides the halved slide, else halve it too.
  std::uint32_t ts = slide.tile_size();
  if (dst.width % ts != 0 || dst.height % ts != 0) ts /= 2;
  SlideContainer out;
  if (ts >= 64) {
    out = SlideContainer::from_image(dst, ts, slide.id());
  } else {
    // 64-pixel tiles halve to 32; build the container through the parser path.
    std::vector<std::uint8_t> bytes;
    io::put_bytes(bytes, "PTHS");
    io::put_u32(bytes, SlideContainer::kVersion);
    io::put_u32(bytes, dst.width);
    io::put_u32(bytes, dst.height);
    io::put_u32(bytes, ts);
    io::put_u8(bytes, 0);
    auto tiles = tile_image(dst, ts, dst.width, dst.height);
    bytes.insert(bytes.end(), tiles.begin(), tiles.end());
    out = SlideContainer::parse(bytes, slide.id());
  }
  out.set_magnification(Magnification::x10);
  return out;
}

}  // namespace porc::slide
