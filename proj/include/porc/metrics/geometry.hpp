// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace porc::metrics {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};
void validate_box(const Box& b);
double area(const Box& b);

struct Mask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> cells;  // row-major, nonzero = inside
};

double iou(const Box& a, const Box& b);
double dice(const Box& a, const Box& b);
/// Both empty counts as a perfect match (1).
double iou(const Mask& a, const Mask& b);
double dice(const Mask& a, const Mask& b);

struct GroundTruth {
  std::string image;
  int cls = 0;
  Box box;
};

struct Detection {
  std::string image;
  int cls = 0;
  Box box;
  double confidence = 0.0;
};

struct DetectionSet {
  std::vector<GroundTruth> truth;
  std::vector<Detection> predictions;
};

/// Average precision of one class: predictions sorted by descending confidence
/// (stable), each matched greedily to the unmatched same-image ground truth of
/// highest IoU >= threshold. Precision/recall points are taken after each
/// distinct confidence level; AP is the area under the precision envelope.
double average_precision(const DetectionSet& dets, int cls, double iou_threshold);
/// Mean AP over classes that have ground truth.
double mean_ap(const DetectionSet& dets, double iou_threshold);

struct SegmentationStats {
  double mpa = 0.0;
  std::vector<double> cpa;  // NaN for classes absent from truth
  double miou = 0.0;
  double mean_dice = 0.0;
  std::vector<double> class_iou;   // NaN when the class is absent from both grids
  std::vector<double> class_dice;
};

SegmentationStats segmentation_stats(const std::vector<int>& pred, const std::vector<int>& truth, std::size_t classes);

}  // namespace porc::metrics
