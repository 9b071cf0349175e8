// SPDX-License-Identifier: Apache-2.0
#include "porc/slide/tissue.hpp"

#include <algorithm>

#include "porc/util/parallel.hpp"

namespace porc::slide {

std::size_t TissueMask::count() const { return static_cast<std::size_t>(std::count(tissue.begin(), tissue.end(), true)); }

bool is_tissue_pixel(std::uint8_t r, std::uint8_t g, std::uint8_t b, const TissueThresholds& t) {
  const int mx = std::max({r, g, b});
  const int mn = std::min({r, g, b});
  const double sat = mx == 0 ? 0.0 : static_cast<double>(mx - mn) / mx;
  const double luma = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
  return sat >= t.min_saturation && luma <= t.max_luminance;
}

TissueMask compute_tissue_mask(const SlideContainer& slide, const TissueThresholds& thresholds, std::size_t workers) {
  TissueMask mask;
  mask.tiles_x = slide.tiles_x();
  mask.tiles_y = slide.tiles_y();
  mask.thresholds = thresholds;
  const std::size_t n = slide.tile_count();
  std::vector<char> flags(n, 0);
  parallel_for(
      n,
      [&](std::size_t i) {
        const auto tile = slide.read_tile(static_cast<std::uint32_t>(i % mask.tiles_x),
                                          static_cast<std::uint32_t>(i / mask.tiles_x));
        std::size_t hits = 0;
        const std::size_t px = static_cast<std::size_t>(tile.width) * tile.height;
        for (std::size_t p = 0; p < px; ++p) {
          if (is_tissue_pixel(tile.pixels[3 * p], tile.pixels[3 * p + 1], tile.pixels[3 * p + 2], thresholds)) ++hits;
        }
        flags[i] = static_cast<double>(hits) >= thresholds.min_fraction * static_cast<double>(px) ? 1 : 0;
      },
      workers == 0 ? default_workers() : workers);
  mask.tissue.assign(flags.begin(), flags.end());
  return mask;
}

}  // namespace porc::slide
