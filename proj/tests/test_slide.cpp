// SPDX-License-Identifier: Apache-2.0
#include <filesystem>

#include "doctest.h"
#include "porc/error.hpp"
#include "porc/slide/container.hpp"
#include "porc/slide/crops.hpp"
#include "porc/slide/tissue.hpp"
#include "porc/util/binary_io.hpp"
#include "porc/util/random.hpp"

using namespace porc;
using namespace porc::slide;

namespace {

RgbImage noise_image(std::uint32_t w, std::uint32_t h, std::uint64_t seed) {
  Rng rng(seed);
  RgbImage img(w, h);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

RgbImage purple(std::uint32_t w, std::uint32_t h) {
  RgbImage img(w, h);
  img.fill_rect(0, 0, w, h, 150, 60, 160);
  return img;
}

bool rects_intersect(const PatchRef& a, const PatchRef& b) {
  const bool sep_x = a.x + a.side <= b.x || b.x + b.side <= a.x;
  const bool sep_y = a.y + a.side <= b.y || b.y + b.side <= a.y;
  return !(sep_x || sep_y);
}

}  // namespace

TEST_CASE("container size arithmetic") {
  const auto s = SlideContainer::from_image(noise_image(256, 256, 1), 256);
  CHECK(s.tile_count() == 1);
  CHECK(s.serialize().size() == SlideContainer::kHeaderBytes + 196608);

  const auto p = SlideContainer::from_image(noise_image(300, 300, 2), 256);
  CHECK(p.tiles_x() == 2);
  CHECK(p.tiles_y() == 2);
  CHECK(p.serialize().size() == SlideContainer::kHeaderBytes + 4 * 196608);
  for (int c = 0; c < 3; ++c) {
    CHECK(p.pixel(299, 299, c) != 0);  // random pixels survive
    CHECK(p.pixel(300, 10, c) == 255);
    CHECK(p.pixel(511, 511, c) == 255);
  }
}

TEST_CASE("container pixels round-trip and bytes are idempotent") {
  const RgbImage img = noise_image(200, 130, 9);
  const auto s = SlideContainer::from_image(img, 64);
  const auto back = s.region(0, 0, 200, 130);
  CHECK(back == img);

  const auto bytes = s.serialize();
  CHECK(bytes[0] == 'P');
  CHECK(bytes[1] == 'T');
  CHECK(bytes[2] == 'H');
  CHECK(bytes[3] == 'S');
  const auto again = SlideContainer::parse(bytes).serialize();
  CHECK(again == bytes);

  const auto dir = std::filesystem::temp_directory_path() / "porc_slide_test";
  std::filesystem::create_directories(dir);
  s.write(dir / "a.pths");
  SlideContainer::read(dir / "a.pths").write(dir / "b.pths");
  CHECK(io::read_file(dir / "a.pths") == io::read_file(dir / "b.pths"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("container rejects bad input") {
  CHECK_THROWS_AS(SlideContainer::from_image(RgbImage(), 64), data_error);
  CHECK_THROWS_AS(SlideContainer::from_image(noise_image(8, 8, 1), 100), data_error);
  auto bytes = SlideContainer::from_image(noise_image(64, 64, 1), 64).serialize();
  bytes.pop_back();
  CHECK_THROWS_AS(SlideContainer::parse(bytes), data_error);
  bytes = SlideContainer::from_image(noise_image(64, 64, 1), 64).serialize();
  bytes[0] = 'X';
  CHECK_THROWS_AS(SlideContainer::parse(bytes), data_error);
}

TEST_CASE("tissue mask examples") {
  CHECK(compute_tissue_mask(SlideContainer::from_image(RgbImage(256, 256, 255), 64)).count() == 0);
  CHECK(compute_tissue_mask(SlideContainer::from_image(purple(256, 256), 64)).count() == 16);

  RgbImage half(256, 256, 255);
  half.fill_rect(128, 0, 128, 256, 150, 60, 160);
  const auto mask = compute_tissue_mask(SlideContainer::from_image(half, 64));
  for (std::uint32_t ty = 0; ty < 4; ++ty)
    for (std::uint32_t tx = 0; tx < 4; ++tx) CHECK(mask.at(tx, ty) == (tx >= 2));
}

TEST_CASE("tissue mask does not depend on worker count") {
  RgbImage img = noise_image(512, 384, 4);
  for (std::uint32_t y = 0; y < 384; y += 64) img.fill_rect(0, y, 512, 32, 255, 255, 255);
  const auto s = SlideContainer::from_image(img, 64);
  const auto one = compute_tissue_mask(s, {}, 1);
  for (std::size_t w : {2, 3, 8}) CHECK(compute_tissue_mask(s, {}, w).tissue == one.tissue);
}

TEST_CASE("8192x5120 all-tissue slide yields exactly 500 patches") {
  const auto s = SlideContainer::from_image(purple(8192, 5120), 256);
  const auto mask = compute_tissue_mask(s);
  CHECK(mask.count() == 640);
  const auto patches = sample_patches(s, mask, 500, 256, 7);
  CHECK(patches.size() == 500);
  CHECK(sample_patches(s, mask, 500, 256, 7) == patches);
  std::size_t bad = 0;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].x + 256 > 8192 || patches[i].y + 256 > 5120) ++bad;
    for (std::size_t j = i + 1; j < patches.size(); ++j) bad += rects_intersect(patches[i], patches[j]);
  }
  CHECK(bad == 0);
}

TEST_CASE("sampled patches never overlap and stay on tissue") {
  std::size_t pairs = 0, overlaps = 0, off_tissue = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    RgbImage img(1024, 768, 255);
    for (int k = 0; k < 6; ++k) {
      img.fill_rect(static_cast<std::uint32_t>(rng.below(900)), static_cast<std::uint32_t>(rng.below(600)),
                    static_cast<std::uint32_t>(100 + rng.below(300)), static_cast<std::uint32_t>(100 + rng.below(300)), 150,
                    60, 160);
    }
    const std::uint32_t tile = seed % 2 == 0 ? 64 : 128;
    const std::uint32_t side = seed % 3 == 0 ? 32 : (seed % 3 == 1 ? 64 : 128);
    const auto s = SlideContainer::from_image(img, tile);
    const auto mask = compute_tissue_mask(s);
    const auto patches = sample_patches(s, mask, 500, side, seed);
    for (std::size_t i = 0; i < patches.size(); ++i) {
      for (std::uint32_t y = patches[i].y; y < patches[i].y + side; y += 1)
        for (std::uint32_t x = patches[i].x; x < patches[i].x + side; x += side) off_tissue += !mask.at(x / tile, y / tile);
      for (std::size_t j = i + 1; j < patches.size(); ++j) {
        ++pairs;
        overlaps += rects_intersect(patches[i], patches[j]);
      }
    }
  }
  CHECK(pairs >= 10000);
  CHECK(overlaps == 0);
  CHECK(off_tissue == 0);
}

TEST_CASE("sampling edge cases") {
  const auto white = SlideContainer::from_image(RgbImage(512, 512, 255), 256);
  CHECK(sample_patches(white, compute_tissue_mask(white)).empty());
  const auto s = SlideContainer::from_image(purple(512, 512), 256);
  CHECK(sample_patches(s, compute_tissue_mask(s), 500, 256).size() == 4);
  CHECK_THROWS_AS(sample_patches(s, compute_tissue_mask(s), 0, 256), data_error);
  CHECK_THROWS_AS(sample_patches(s, compute_tissue_mask(s), 5, 96), data_error);
}

TEST_CASE("manifest round-trip") {
  std::vector<ManifestEntry> e = {{"a", {"s1", 0, 256, 256, Magnification::x20}, 1},
                                  {"b", {"s1", 512, 0, 128, Magnification::x10}, std::nullopt}};
  const auto back = manifest_from_jsonl(manifest_to_jsonl(e));
  REQUIRE(back.size() == 2);
  CHECK(back[0].patch == e[0].patch);
  CHECK(back[0].label == 1);
  CHECK(back[1].patch == e[1].patch);
  CHECK(!back[1].label.has_value());
  CHECK_THROWS_AS(manifest_from_jsonl("{\"id\": \"x\"}\n"), data_error);
}

TEST_CASE("downsample_2x") {
  const auto c = downsample_2x(SlideContainer::from_image(purple(256, 128), 64));
  CHECK(c.width() == 128);
  CHECK(c.height() == 64);
  CHECK(c.magnification() == Magnification::x10);
  CHECK(c.pixel(5, 5, 0) == 150);
  CHECK(c.pixel(5, 5, 2) == 160);

  RgbImage board(128, 128);
  for (std::uint32_t y = 0; y < 128; ++y)
    for (std::uint32_t x = 0; x < 128; ++x) {
      const std::uint8_t v = (x + y) % 2 == 0 ? 0 : 255;
      board.set(x, y, v, v, v);
    }
  const auto d = downsample_2x(SlideContainer::from_image(board, 64)).to_image();
  for (auto v : d.pixels) CHECK(v == 128);
}

TEST_CASE("crop set counts, sizes and determinism") {
  const RgbImage src = noise_image(256, 256, 5);
  const CropConfig cfg;
  const auto a = make_crop_set(src, cfg, 42);
  REQUIRE(a.global_views.size() == 2);
  REQUIRE(a.local_views.size() == 8);
  for (const auto& v : a.global_views) {
    CHECK(v.pixels.width == 224);
    CHECK(v.pixels.height == 224);
    CHECK(v.log.front().name == "random_resized_crop");
  }
  for (const auto& v : a.local_views) {
    CHECK(v.pixels.width == 96);
    CHECK(!v.global);
  }
  CHECK(make_crop_set(src, cfg, 42) == a);
  CHECK_THROWS_AS(make_crop_set(noise_image(64, 64, 1), cfg, 1), data_error);
}

TEST_CASE("no-op augmentation gives resized copies") {
  const RgbImage src = noise_image(128, 128, 6);
  CropConfig cfg = CropConfig().without_augmentation();
  cfg.global_scale = {1.0, 1.0};
  cfg.aspect_ratio = {1.0, 1.0};
  const auto set = make_crop_set(src, cfg, 3);
  for (const auto& v : set.global_views) {
    CHECK(v.pixels == resize_bilinear(src, 224, 224));
    CHECK(v.log.size() == 1);
  }
  CHECK(resize_bilinear(src, 128, 128) == src);
}

TEST_CASE("hflip is an involution") {
  const RgbImage src = noise_image(37, 21, 8);
  CHECK(hflip(hflip(src)) == src);
  CHECK(hflip(src) != src);
}
