// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace porc::metrics {

struct RetrievalResult {
  int query_label = 0;
  std::vector<int> neighbor_labels;  // nearest first
};

/// Fraction of queries with at least one same-label neighbor in the top k.
double retrieval_acc(const std::vector<RetrievalResult>& results, std::size_t k);

/// Modal label of the top 5 must equal the query label; among tied modal labels
/// the one appearing at the nearest rank wins.
int majority_vote_label(const std::vector<int>& neighbor_labels, std::size_t k = 5);
double majority_vote_acc(const std::vector<RetrievalResult>& results, std::size_t k = 5);

}  // namespace porc::metrics
