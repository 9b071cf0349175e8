// SPDX-License-Identifier: Apache-2.0
#include "porc/downstream/folds.hpp"

#include <set>

#include "porc/error.hpp"

namespace porc::ds {

FoldPlan make_patient_folds(const std::vector<std::string>& patient_ids) {
  const std::set<std::string> distinct(patient_ids.begin(), patient_ids.end());
  if (distinct.size() < 2) throw data_error("folds: need at least two distinct patients");
  return FoldPlan{{distinct.begin(), distinct.end()}};
}

FoldIndices fold_indices(const FoldPlan& plan, std::size_t fold, const std::vector<std::string>& patient_ids) {
  if (fold >= plan.held_out.size()) throw data_error("folds: fold index out of range");
  FoldIndices out;
  for (std::size_t i = 0; i < patient_ids.size(); ++i) {
    (patient_ids[i] == plan.held_out[fold] ? out.test : out.train).push_back(i);
  }
  return out;
}

}  // namespace porc::ds
