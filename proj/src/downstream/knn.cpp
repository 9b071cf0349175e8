// SPDX-License-Identifier: Apache-2.0
#include "porc/downstream/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "porc/error.hpp"

namespace porc::ds {

namespace {

void normalize_into(std::span<const double> src, double* dst) {
  double n = 0.0;
  for (double v : src) n += v * v;
  n = std::sqrt(n);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = n > 0.0 ? src[i] / n : 0.0;
}

}  // namespace

KnnIndex::KnnIndex(const nc::Tensor& features, std::vector<int> labels, std::vector<std::string> ids)
    : dim_(features.cols()), labels_(std::move(labels)), ids_(std::move(ids)) {
  if (features.rows() != labels_.size()) {
    throw shape_error("knn: " + std::to_string(features.rows()) + " rows vs " + std::to_string(labels_.size()) +
                      " labels");
  }
  if (ids_.empty()) {
    for (std::size_t i = 0; i < labels_.size(); ++i) ids_.push_back(std::to_string(i));
  } else if (ids_.size() != labels_.size()) {
    throw shape_error("knn: id count differs from row count");
  }
  rows_.resize(labels_.size() * dim_);
  for (std::size_t i = 0; i < labels_.size(); ++i) normalize_into(features.data().subspan(i * dim_, dim_), &rows_[i * dim_]);
}

std::vector<Neighbor> knn_query(const KnnIndex& index, std::span<const double> query, std::size_t k) {
  if (query.size() != index.dim()) {
    throw shape_error("knn: query dim " + std::to_string(query.size()) + " vs index " + std::to_string(index.dim()));
  }
  if (k == 0 || k > index.size()) {
    throw data_error("knn: k=" + std::to_string(k) + " must be in [1, " + std::to_string(index.size()) + "]");
  }
  std::vector<double> q(query.size());
  normalize_into(query, q.data());
  std::vector<Neighbor> all(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto r = index.row(i);
    double s = 0.0;
    for (std::size_t c = 0; c < q.size(); ++c) s += (r[c] - q[c]) * (r[c] - q[c]);
    all[i] = {i, index.label(i), std::sqrt(s)};
  }
  std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; });
  all.resize(k);
  return all;
}

}  // namespace porc::ds
