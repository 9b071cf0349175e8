// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace porc::harness {

struct SplitSpec {
  std::string ratio;        // "8:1:1", "6:4", ... or "leave-one-patient-out"
  std::vector<int> parts;   // parsed ratio; empty for leave-one-patient-out
  bool stratified = true;
  std::string ratio_source;  // "paper" or "default"

  bool leave_one_patient_out() const { return parts.empty(); }
};

/// Parses "a:b[:c]" or "leave-one-patient-out"; throws data_error otherwise.
SplitSpec parse_split(const std::string& ratio, bool stratified = true);

struct TrainSpec {
  std::int64_t epochs = 50;
  double lr = 2e-5;
  std::int64_t batch = 1;
  std::int64_t max_iters = 1000;
};

struct TaskDescriptor {
  int id = 0;
  std::string name;
  std::string category;
  std::string level;     // WSI | ROI
  std::string protocol;  // linear-probe | abmil | knn | ridge | detection-metrics-only | segmentation-metrics-only
  SplitSpec split;
  std::vector<std::string> metrics;
  std::vector<std::string> class_labels;
  TrainSpec train;
  std::size_t genes = 0;
  std::size_t quantity = 0;
  bool open_source = false;
};

inline const std::vector<std::string>& category_order() {
  static const std::vector<std::string> order = {"slide-preprocessing",  "pan-cancer",          "lesion-identification",
                                                 "cancer-subtyping",     "biomarker-evaluation", "gene-expression"};
  return order;
}

/// Metric names each protocol must emit.
const std::vector<std::string>& protocol_metrics(const std::string& protocol);

/// Parses and validates a registry JSON array. `what` names the source in
/// error messages ("<what>:<line>: ..."). With require_complete, ids must be
/// exactly 1..112 and category totals 12/3/15/36/36/10.
std::vector<TaskDescriptor> parse_registry(const std::string& text, const std::string& what,
                                           bool require_complete = true);
std::vector<TaskDescriptor> load_registry(const std::filesystem::path& path);
/// The registry shipped in the data directory.
std::vector<TaskDescriptor> load_registry();
std::filesystem::path default_registry_path();

std::map<std::string, std::size_t> category_counts(const std::vector<TaskDescriptor>& tasks);
const TaskDescriptor& find_task(const std::vector<TaskDescriptor>& tasks, int id);

}  // namespace porc::harness
