// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "porc/harness/registry.hpp"
#include "porc/metrics/geometry.hpp"
#include "porc/numeric/tensor.hpp"
#include "porc/slide/image.hpp"

namespace porc::harness {

/// Labeled ROI patches (linear-probe and knn tasks).
struct RoiFixture {
  std::vector<slide::RgbImage> images;
  std::vector<int> labels;
  std::vector<std::string> patients;
};

/// WSI bags of instance patches (abmil tasks).
struct BagFixture {
  std::vector<std::vector<slide::RgbImage>> bags;
  std::vector<int> labels;
  std::vector<std::string> ids;
};

/// Spots with expression targets (ridge tasks).
struct GeneFixture {
  std::vector<slide::RgbImage> images;
  std::vector<std::string> patients;
  nc::Tensor expression;  // [n, G]
};

/// Externally supplied segmentation predictions.
struct SegmentationFixture {
  std::size_t classes = 0;
  std::vector<std::vector<int>> truth;
  std::vector<std::vector<int>> pred;
};

/// Externally supplied detections.
struct DetectionFixture {
  metrics::DetectionSet detections;
};

struct Fixture {
  std::string kind;  // roi | bags | genes | segmentation | detection
  std::uint64_t fingerprint = 0;
  std::variant<RoiFixture, BagFixture, GeneFixture, SegmentationFixture, DetectionFixture> data;
};

struct FixtureOptions {
  std::uint32_t patch_size = 16;
  std::size_t per_class = 12;      // roi items per class
  std::size_t bags_per_class = 10;
  std::size_t bag_size = 6;
  std::size_t max_patients = 8;    // gene tasks
  std::size_t spots_per_patient = 6;
  bool perfect = false;            // metrics-only fixtures carry exact predictions
};

/// Fixture kind a protocol consumes.
std::string fixture_kind(const std::string& protocol);

/// Seeded synthetic fixture for the task's protocol family.
Fixture make_fixture(const TaskDescriptor& task, std::uint64_t seed, const FixtureOptions& options = {});

}  // namespace porc::harness
