// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "porc/numeric/tensor.hpp"

namespace porc::metrics {

struct PredictionRecord {
  std::string id;
  int label = 0;
  std::vector<double> scores;  // per-class scores; may be empty when `predicted` is set
  int predicted = -1;          // -1: argmax of scores
  std::string group{};
};

int predicted_label(const PredictionRecord& r);

double accuracy(const std::vector<int>& truth, const std::vector<int>& pred);
/// Mean recall over the classes present in truth.
double balanced_accuracy(const std::vector<int>& truth, const std::vector<int>& pred);
/// Support-weighted F1; a class with 0/0 precision or recall scores 0.
double weighted_f1(const std::vector<int>& truth, const std::vector<int>& pred);

double accuracy(const std::vector<PredictionRecord>& records);
double balanced_accuracy(const std::vector<PredictionRecord>& records);
double weighted_f1(const std::vector<PredictionRecord>& records);

/// Mann-Whitney AUC of scores for positives (true) against negatives. Throws if a side is empty.
double binary_auc(const std::vector<bool>& positive, const std::vector<double>& scores);
/// Binary: score_1 ranks class 1. Multiclass: unweighted mean of one-vs-rest AUCs over classes in truth.
double roc_auc(const std::vector<PredictionRecord>& records);

/// Mean over target columns of Pearson r; zero-variance columns count as 0.
double pearson_mean(const nc::Tensor& pred, const nc::Tensor& truth);

/// {"accuracy":..,"balanced_accuracy":..,"weighted_f1":..,"auc":..} restricted to `names`.
nlohmann::json classification_metrics(const std::vector<PredictionRecord>& records,
                                      const std::vector<std::string>& names);

}  // namespace porc::metrics
