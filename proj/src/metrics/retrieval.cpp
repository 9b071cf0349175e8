// SPDX-License-Identifier: Apache-2.0
#include "porc/metrics/retrieval.hpp"

#include <algorithm>
#include <map>

#include "porc/error.hpp"

namespace porc::metrics {

double retrieval_acc(const std::vector<RetrievalResult>& results, std::size_t k) {
  if (results.empty()) throw data_error("retrieval: no queries");
  if (k == 0) throw data_error("retrieval: k must be >= 1");
  std::size_t hits = 0;
  for (const auto& r : results) {
    if (r.neighbor_labels.size() < k) throw data_error("retrieval: fewer than k neighbors for a query");
    hits += std::find(r.neighbor_labels.begin(), r.neighbor_labels.begin() + static_cast<std::ptrdiff_t>(k),
                      r.query_label) != r.neighbor_labels.begin() + static_cast<std::ptrdiff_t>(k);
  }
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

int majority_vote_label(const std::vector<int>& labels, std::size_t k) {
  if (k == 0 || labels.size() < k) throw data_error("retrieval: fewer than k neighbors for majority vote");
  std::map<int, std::pair<std::size_t, std::size_t>> votes;  // label -> (count, first rank)
  for (std::size_t i = 0; i < k; ++i) {
    auto [it, fresh] = votes.try_emplace(labels[i], 0, i);
    ++it->second.first;
  }
  int best = labels[0];
  std::pair<std::size_t, std::size_t> best_v = votes[best];
  for (const auto& [label, v] : votes) {
    if (v.first > best_v.first || (v.first == best_v.first && v.second < best_v.second)) {
      best = label;
      best_v = v;
    }
  }
  return best;
}

double majority_vote_acc(const std::vector<RetrievalResult>& results, std::size_t k) {
  if (results.empty()) throw data_error("retrieval: no queries");
  std::size_t hits = 0;
  for (const auto& r : results) hits += majority_vote_label(r.neighbor_labels, k) == r.query_label;
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

}  // namespace porc::metrics
