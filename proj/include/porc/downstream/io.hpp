// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "porc/downstream/knn.hpp"
#include "porc/numeric/tensor.hpp"

namespace porc::ds {

struct PredictionRow {
  std::string id;
  int true_label = 0;
  std::vector<double> scores;
};

// id,true_label,score_0,...,score_{C-1}
std::string predictions_csv(const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> parse_predictions_csv(const std::string& text, const std::string& what = "predictions");
void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_predictions(const std::filesystem::path& path);

struct RetrievalRow {
  std::string query_id;
  std::size_t rank = 0;  // 1-based
  std::string neighbor_id;
  int label = 0;
  double distance = 0.0;
};

// query_id,rank,neighbor_id,label,distance
std::string retrieval_csv(const std::vector<RetrievalRow>& rows);
void write_retrieval(const std::filesystem::path& path, const std::vector<RetrievalRow>& rows);

/// Labeled feature table: "id,label,patient,f_0,...". Used by the probe/mil/knn/genes commands.
struct LabeledFeatures {
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<std::string> groups;
  nc::Tensor features;
};
LabeledFeatures read_labeled_features(const std::filesystem::path& path);
std::string labeled_features_csv(const LabeledFeatures& t);

}  // namespace porc::ds
