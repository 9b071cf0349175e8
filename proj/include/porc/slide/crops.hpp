// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "porc/slide/image.hpp"

namespace porc::slide {

// Pixel transforms used by the multi-crop pipeline.

/// Bilinear resize with half-pixel centers and edge clamping.
RgbImage resize_bilinear(const RgbImage& src, std::uint32_t width, std::uint32_t height);
RgbImage hflip(const RgbImage& src);
RgbImage grayscale(const RgbImage& src);
RgbImage gaussian_blur(const RgbImage& src, double sigma);

struct JitterParams {
  double brightness = 1.0;  // multiplicative
  double contrast = 1.0;    // around the mean luma
  double saturation = 1.0;  // around per-pixel gray
  double hue = 0.0;         // rotation in turns, [-0.5, 0.5]
};
RgbImage color_jitter(const RgbImage& src, const JitterParams& p);

struct CropConfig {
  std::size_t global_count = 2;
  std::uint32_t global_size = 224;
  std::pair<double, double> global_scale{0.48, 1.0};
  std::size_t local_count = 8;
  std::uint32_t local_size = 96;
  std::pair<double, double> local_scale{0.16, 0.48};
  std::pair<double, double> aspect_ratio{3.0 / 4.0, 4.0 / 3.0};

  double hflip_p = 0.5;
  double jitter_p = 0.8;
  double jitter_strength = 0.4;  // brightness/contrast = s, saturation = s/2, hue = s/4
  double grayscale_p = 0.2;
  double blur_p_first_global = 0.5;
  double blur_p_other = 0.1;
  std::pair<double, double> blur_sigma{0.1, 2.0};

  std::uint32_t min_source = 96;

  /// All augmentation probabilities zero.
  CropConfig without_augmentation() const;
};

struct AugStep {
  std::string name;
  std::map<std::string, double> params;

  bool operator==(const AugStep&) const = default;
};

struct View {
  RgbImage pixels;
  bool global = true;
  std::vector<AugStep> log;

  bool operator==(const View&) const = default;
};

struct CropSet {
  std::vector<View> global_views;
  std::vector<View> local_views;

  bool operator==(const CropSet&) const = default;
};

/// Global and local views of one source patch; deterministic per seed.
CropSet make_crop_set(const RgbImage& source, const CropConfig& config, std::uint64_t seed);

}  // namespace porc::slide
