// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "porc/numeric/tensor.hpp"

namespace porc::ds {

/// Rows are stored l2-normalized; distance is Euclidean between normalized rows.
class KnnIndex {
 public:
  KnnIndex(const nc::Tensor& features, std::vector<int> labels, std::vector<std::string> ids = {});

  std::size_t size() const { return labels_.size(); }
  std::size_t dim() const { return dim_; }
  int label(std::size_t i) const { return labels_[i]; }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  std::span<const double> row(std::size_t i) const { return {rows_.data() + i * dim_, dim_}; }

 private:
  std::size_t dim_ = 0;
  std::vector<double> rows_;
  std::vector<int> labels_;
  std::vector<std::string> ids_;
};

struct Neighbor {
  std::size_t index = 0;
  int label = 0;
  double distance = 0.0;
};

/// k nearest rows by ascending distance; equal distances keep insertion order.
std::vector<Neighbor> knn_query(const KnnIndex& index, std::span<const double> query, std::size_t k);

}  // namespace porc::ds
