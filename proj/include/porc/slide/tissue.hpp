// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "porc/slide/container.hpp"

namespace porc::slide {

struct TissueThresholds {
  double min_saturation = 0.05;  // HSV saturation
  double max_luminance = 0.9;    // Rec.601 luma in [0,1]
  double min_fraction = 0.10;    // fraction of qualifying pixels per tile
};

struct TissueMask {
  std::uint32_t tiles_x = 0;
  std::uint32_t tiles_y = 0;
  std::vector<bool> tissue;  // row-major over tiles
  TissueThresholds thresholds;

  bool at(std::uint32_t tx, std::uint32_t ty) const { return tissue[static_cast<std::size_t>(ty) * tiles_x + tx]; }
  std::size_t count() const;
};

bool is_tissue_pixel(std::uint8_t r, std::uint8_t g, std::uint8_t b, const TissueThresholds& t);

TissueMask compute_tissue_mask(const SlideContainer& slide, const TissueThresholds& thresholds = {},
                               std::size_t workers = 0);

struct PatchRef {
  std::string slide;
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t side = 256;
  Magnification mag = Magnification::x20;

  bool operator==(const PatchRef&) const = default;
};

bool patches_overlap(const PatchRef& a, const PatchRef& b);

/// Uniform selection without replacement of up to `cap` non-overlapping
/// side x side grid cells that lie entirely on tissue tiles. Output is in
/// row-major cell order. No tissue yields an empty list.
std::vector<PatchRef> sample_patches(const SlideContainer& slide, const TissueMask& mask, std::size_t cap = 500,
                                     std::uint32_t side = 256, std::uint64_t seed = 0);

/// One JSON-lines record per patch: {id, slide, x, y, side, mag, label?}.
struct ManifestEntry {
  std::string id;
  PatchRef patch;
  std::optional<int> label;
};

std::string manifest_to_jsonl(const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> manifest_from_jsonl(const std::string& text);

}  // namespace porc::slide
