// SPDX-License-Identifier: Apache-2.0
#include "porc/slide/crops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "porc/error.hpp"
#include "porc/util/random.hpp"

namespace porc::slide {
namespace {

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

}  // namespace

RgbImage resize_bilinear(const RgbImage& src, std::uint32_t width, std::uint32_t height) {
  if (src.empty() || width == 0 || height == 0) throw data_error("resize: empty image");
  if (src.width == width && src.height == height) return src;
  RgbImage out(width, height);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (std::uint32_t y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
    const auto y0 = static_cast<std::uint32_t>(fy);
    const std::uint32_t y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (std::uint32_t x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
      const auto x0 = static_cast<std::uint32_t>(fx);
      const std::uint32_t x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = src.at(x0, y0, c) * (1.0 - wx) + src.at(x1, y0, c) * wx;
        const double bot = src.at(x0, y1, c) * (1.0 - wx) + src.at(x1, y1, c) * wx;
        out.pixels[out.index(x, y) + c] = to_u8(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return out;
}

RgbImage hflip(const RgbImage& src) {
  RgbImage out(src.width, src.height);
  for (std::uint32_t y = 0; y < src.height; ++y)
    for (std::uint32_t x = 0; x < src.width; ++x) {
      const auto s = src.index(src.width - 1 - x, y);
      out.set(x, y, src.pixels[s], src.pixels[s + 1], src.pixels[s + 2]);
    }
  return out;
}

RgbImage grayscale(const RgbImage& src) {
  RgbImage out = src;
  for (std::size_t i = 0; i < out.pixels.size(); i += 3) {
    const auto v = to_u8(luma(src.pixels[i], src.pixels[i + 1], src.pixels[i + 2]));
    out.pixels[i] = out.pixels[i + 1] = out.pixels[i + 2] = v;
  }
  return out;
}

RgbImage gaussian_blur(const RgbImage& src, double sigma) {
  if (!(sigma > 0.0)) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double z = 0.0;
  for (int i = -radius; i <= radius; ++i) z += (k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma)));
  for (double& v : k) v /= z;

  const int w = static_cast<int>(src.width), h = static_cast<int>(src.height);
  std::vector<double> tmp(src.pixels.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = std::clamp(x + i, 0, w - 1);
          s += k[i + radius] * src.pixels[(static_cast<std::size_t>(y) * w + xx) * 3 + c];
        }
        tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = s;
      }
  RgbImage out(src.width, src.height);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = std::clamp(y + i, 0, h - 1);
          s += k[i + radius] * tmp[(static_cast<std::size_t>(yy) * w + x) * 3 + c];
        }
        out.pixels[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_u8(s);
      }
  return out;
}

RgbImage color_jitter(const RgbImage& src, const JitterParams& p) {
  const std::size_t n = src.pixels.size() / 3;
  std::vector<double> px(src.pixels.begin(), src.pixels.end());
  for (double& v : px) v = std::clamp(v * p.brightness, 0.0, 255.0);

  double mean_luma = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_luma += luma(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
  mean_luma /= static_cast<double>(n);
  for (double& v : px) v = std::clamp(mean_luma + p.contrast * (v - mean_luma), 0.0, 255.0);

  for (std::size_t i = 0; i < n; ++i) {
    const double g = luma(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    for (int c = 0; c < 3; ++c) px[3 * i + c] = std::clamp(g + p.saturation * (px[3 * i + c] - g), 0.0, 255.0);
  }

  if (p.hue != 0.0) {
    // Rotate chroma in YIQ space.
    const double a = 2.0 * std::numbers::pi * p.hue;
    const double cs = std::cos(a), sn = std::sin(a);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = px[3 * i], g = px[3 * i + 1], b = px[3 * i + 2];
      const double yv = 0.299 * r + 0.587 * g + 0.114 * b;
      const double iv = 0.596 * r - 0.274 * g - 0.322 * b;
      const double qv = 0.211 * r - 0.523 * g + 0.312 * b;
      const double i2 = iv * cs - qv * sn, q2 = iv * sn + qv * cs;
      px[3 * i] = yv + 0.956 * i2 + 0.621 * q2;
      px[3 * i + 1] = yv - 0.272 * i2 - 0.647 * q2;
      px[3 * i + 2] = yv - 1.106 * i2 + 1.703 * q2;
    }
  }
  RgbImage out(src.width, src.height);
  for (std::size_t i = 0; i < px.size(); ++i) out.pixels[i] = to_u8(px[i]);
  return out;
}

CropConfig CropConfig::without_augmentation() const {
  CropConfig c = *this;
  c.hflip_p = c.jitter_p = c.grayscale_p = c.blur_p_first_global = c.blur_p_other = 0.0;
  return c;
}

namespace {

View make_view(const RgbImage& source, const CropConfig& cfg, bool global, double blur_p, Rng& rng) {
  View v;
  v.global = global;
  const auto [smin, smax] = global ? cfg.global_scale : cfg.local_scale;
  const std::uint32_t out_size = global ? cfg.global_size : cfg.local_size;

  // Random resized crop.
  const double area = static_cast<double>(source.width) * source.height;
  const double scale = rng.uniform(smin, smax);
  const double log_lo = std::log(cfg.aspect_ratio.first), log_hi = std::log(cfg.aspect_ratio.second);
  std::uint32_t cw = source.width, ch = source.height, cx = 0, cy = 0;
  bool found = false;
  double ratio = 1.0;
  for (int attempt = 0; attempt < 10 && !found; ++attempt) {
    ratio = std::exp(rng.uniform(log_lo, log_hi));
    const auto w = static_cast<std::uint32_t>(std::lround(std::sqrt(area * scale * ratio)));
    const auto h = static_cast<std::uint32_t>(std::lround(std::sqrt(area * scale / ratio)));
    if (w >= 1 && h >= 1 && w <= source.width && h <= source.height) {
      cw = w;
      ch = h;
      cx = static_cast<std::uint32_t>(rng.below(source.width - w + 1));
      cy = static_cast<std::uint32_t>(rng.below(source.height - h + 1));
      found = true;
    }
  }
  if (!found) {
    cw = source.width;
    ch = source.height;
    cx = cy = 0;
  }
  v.pixels = resize_bilinear(crop(source, cx, cy, cw, ch), out_size, out_size);
  v.log.push_back({"random_resized_crop",
                   {{"scale", scale}, {"x", cx}, {"y", cy}, {"w", cw}, {"h", ch}, {"size", out_size}}});

  if (rng.bernoulli(cfg.hflip_p)) {
    v.pixels = hflip(v.pixels);
    v.log.push_back({"hflip", {}});
  }
  if (rng.bernoulli(cfg.jitter_p)) {
    const double s = cfg.jitter_strength;
    JitterParams jp;
    jp.brightness = rng.uniform(std::max(0.0, 1.0 - s), 1.0 + s);
    jp.contrast = rng.uniform(std::max(0.0, 1.0 - s), 1.0 + s);
    jp.saturation = rng.uniform(std::max(0.0, 1.0 - s / 2), 1.0 + s / 2);
    jp.hue = rng.uniform(-s / 4, s / 4);
    v.pixels = color_jitter(v.pixels, jp);
    v.log.push_back({"color_jitter",
                     {{"brightness", jp.brightness}, {"contrast", jp.contrast}, {"saturation", jp.saturation},
                      {"hue", jp.hue}}});
  }
  if (rng.bernoulli(cfg.grayscale_p)) {
    v.pixels = grayscale(v.pixels);
    v.log.push_back({"grayscale", {}});
  }
  if (rng.bernoulli(blur_p)) {
    const double sigma = rng.uniform(cfg.blur_sigma.first, cfg.blur_sigma.second);
    v.pixels = gaussian_blur(v.pixels, sigma);
    v.log.push_back({"gaussian_blur", {{"sigma", sigma}}});
  }
  return v;
}

}  // namespace

CropSet make_crop_set(const RgbImage& source, const CropConfig& config, std::uint64_t seed) {
  if (source.width < config.min_source || source.height < config.min_source) {
    throw data_error("make_crop_set: source " + std::to_string(source.width) + "x" + std::to_string(source.height) +
                     " is smaller than " + std::to_string(config.min_source) + "x" +
                     std::to_string(config.min_source));
  }
  Rng rng(seed);
  CropSet set;
  for (std::size_t i = 0; i < config.global_count; ++i) {
    set.global_views.push_back(
        make_view(source, config, true, i == 0 ? config.blur_p_first_global : config.blur_p_other, rng));
  }
  for (std::size_t i = 0; i < config.local_count; ++i) {
    set.local_views.push_back(make_view(source, config, false, config.blur_p_other, rng));
  }
  return set;
}

}  // namespace porc::slide
