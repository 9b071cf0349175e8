// SPDX-License-Identifier: Apache-2.0
#include "porc/harness/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "porc/error.hpp"
#include "porc/util/random.hpp"

namespace porc::harness {

using slide::RgbImage;

std::string fixture_kind(const std::string& protocol) {
  if (protocol == "linear-probe" || protocol == "knn") return "roi";
  if (protocol == "abmil") return "bags";
  if (protocol == "ridge") return "genes";
  if (protocol == "segmentation-metrics-only") return "segmentation";
  if (protocol == "detection-metrics-only") return "detection";
  throw data_error("no fixture family for protocol '" + protocol + "'");
}

namespace {

struct Rgb {
  double r, g, b;
};

// Fully saturated color at hue h in [0,1).
Rgb hue_color(double h) {
  const double x = 6.0 * (h - std::floor(h));
  const auto ch = [&](double off) { return std::clamp(std::abs(std::fmod(x + off, 6.0) - 3.0) - 1.0, 0.0, 1.0); };
  return {ch(0.0), ch(4.0), ch(2.0)};
}

std::uint8_t px(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L)); }

RgbImage patch(std::uint32_t size, Rgb base, double noise, Rng& rng) {
  RgbImage img(size, size);
  for (std::uint32_t y = 0; y < size; ++y)
    for (std::uint32_t x = 0; x < size; ++x) {
      img.set(x, y, px(base.r + rng.normal(0.0, noise)), px(base.g + rng.normal(0.0, noise)),
              px(base.b + rng.normal(0.0, noise)));
    }
  return img;
}

Rgb class_color(std::size_t c, std::size_t classes) {
  const Rgb h = hue_color(static_cast<double>(c) / static_cast<double>(classes));
  // Alternate light/dark shades so neighbouring hues also differ in brightness.
  const double k = c % 2 == 0 ? 0.85 : 0.55;
  return {0.1 + k * h.r, 0.1 + k * h.g, 0.1 + k * h.b};
}

const Rgb kBackground{0.92, 0.80, 0.86};

RoiFixture roi(std::size_t C, std::uint64_t seed, const FixtureOptions& o) {
  Rng rng(seed);
  RoiFixture f;
  for (std::size_t i = 0; i < C * o.per_class; ++i) {
    const std::size_t c = i % C;
    f.images.push_back(patch(o.patch_size, class_color(c, C), 0.04, rng));
    f.labels.push_back(static_cast<int>(c));
    f.patients.push_back(fmt::format("p{:04d}", i));
  }
  return f;
}

BagFixture bags(std::size_t C, std::uint64_t seed, const FixtureOptions& o) {
  Rng rng(seed);
  BagFixture f;
  for (std::size_t i = 0; i < C * o.bags_per_class; ++i) {
    const std::size_t c = i % C;
    const std::size_t n = o.bag_size / 2 + rng.below(o.bag_size / 2 + 1);
    const std::size_t signal = 1 + rng.below(std::max<std::size_t>(1, n / 3));
    std::vector<RgbImage> bag;
    for (std::size_t k = 0; k < std::max<std::size_t>(n, 1); ++k) {
      bag.push_back(patch(o.patch_size, k < signal ? class_color(c, C) : kBackground, 0.04, rng));
    }
    rng.shuffle(bag);
    f.bags.push_back(std::move(bag));
    f.labels.push_back(static_cast<int>(c));
    f.ids.push_back(fmt::format("slide{:04d}", i));
  }
  return f;
}

GeneFixture genes(const TaskDescriptor& t, std::uint64_t seed, const FixtureOptions& o) {
  Rng rng(seed);
  GeneFixture f;
  const std::size_t patients = std::clamp<std::size_t>(t.quantity, 2, o.max_patients);
  const std::size_t G = t.genes, n = patients * o.spots_per_patient;
  std::vector<double> mix(G * 3);
  for (auto& v : mix) v = rng.normal();
  std::vector<double> y(n * G);
  for (std::size_t i = 0; i < n; ++i) {
    const Rgb base{rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9)};
    f.images.push_back(patch(o.patch_size, base, 0.02, rng));
    f.patients.push_back(fmt::format("patient{:02d}", i / o.spots_per_patient));
    for (std::size_t g = 0; g < G; ++g) {
      y[i * G + g] = mix[g * 3] * base.r + mix[g * 3 + 1] * base.g + mix[g * 3 + 2] * base.b + rng.normal(0.0, 0.05);
    }
  }
  f.expression = nc::Tensor({n, G}, std::move(y));
  return f;
}

SegmentationFixture segmentation(std::size_t C, std::uint64_t seed, const FixtureOptions& o) {
  Rng rng(seed);
  SegmentationFixture f;
  f.classes = C;
  const std::size_t side = 16;
  for (std::size_t img = 0; img < std::max<std::size_t>(4, C); ++img) {
    std::vector<int> truth(side * side, 0);
    for (std::size_t c = 1; c < C; ++c) {
      if ((img + c) % 2 != 0 && c != img % C) continue;
      const std::size_t x0 = rng.below(side - 4), y0 = rng.below(side - 4);
      const std::size_t w = 2 + rng.below(side - x0 - 2), h = 2 + rng.below(side - y0 - 2);
      for (std::size_t y = y0; y < y0 + h; ++y)
        for (std::size_t x = x0; x < x0 + w; ++x) truth[y * side + x] = static_cast<int>(c);
    }
    std::vector<int> pred = truth;
    if (!o.perfect) {
      for (auto& v : pred)
        if (rng.bernoulli(0.1)) v = static_cast<int>(rng.below(C));
    }
    f.truth.push_back(std::move(truth));
    f.pred.push_back(std::move(pred));
  }
  return f;
}

DetectionFixture detection(std::size_t C, std::uint64_t seed, const FixtureOptions& o) {
  Rng rng(seed);
  DetectionFixture f;
  for (std::size_t img = 0; img < 6; ++img) {
    const std::string image = fmt::format("img{}", img);
    const std::size_t boxes = 1 + rng.below(3);
    for (std::size_t b = 0; b < boxes; ++b) {
      const int cls = static_cast<int>((img + b) % C);
      const double x = rng.uniform(0, 200), y = rng.uniform(0, 200);
      const metrics::Box box{x, y, x + rng.uniform(20, 60), y + rng.uniform(20, 60)};
      f.detections.truth.push_back({image, cls, box});
      if (o.perfect) {
        f.detections.predictions.push_back({image, cls, box, 1.0});
        continue;
      }
      const double dx = rng.normal(0.0, 4.0), dy = rng.normal(0.0, 4.0);
      if (!rng.bernoulli(0.15)) {
        f.detections.predictions.push_back(
            {image, cls, {box.x1 + dx, box.y1 + dy, box.x2 + dx, box.y2 + dy}, rng.uniform(0.3, 1.0)});
      }
      if (rng.bernoulli(0.3)) {
        const double fx = rng.uniform(0, 200), fy = rng.uniform(0, 200);
        f.detections.predictions.push_back({image, cls, {fx, fy, fx + 30, fy + 30}, rng.uniform(0.0, 0.7)});
      }
    }
  }
  return f;
}

}  // namespace

Fixture make_fixture(const TaskDescriptor& task, std::uint64_t seed, const FixtureOptions& o) {
  if (o.patch_size < 8) throw data_error("fixture: patch size must be >= 8");
  Fixture f;
  f.kind = fixture_kind(task.protocol);
  const std::size_t C = task.class_labels.size();
  const std::string params =
      fmt::format("{}|task={}|seed={}|classes={}|genes={}|quantity={}|patch={}|per_class={}|bags={}x{}|patients={}x{}|perfect={}",
                  f.kind, task.id, seed, C, task.genes, task.quantity, o.patch_size, o.per_class, o.bags_per_class,
                  o.bag_size, o.max_patients, o.spots_per_patient, o.perfect);
  f.fingerprint = fnv1a(params.data(), params.size());
  if (f.kind == "roi") f.data = roi(C, seed, o);
  else if (f.kind == "bags") f.data = bags(C, seed, o);
  else if (f.kind == "genes") f.data = genes(task, seed, o);
  else if (f.kind == "segmentation") f.data = segmentation(C, seed, o);
  else f.data = detection(C, seed, o);
  return f;
}

}  // namespace porc::harness
