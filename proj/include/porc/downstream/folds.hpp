// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace porc::ds {

struct FoldPlan {
  std::vector<std::string> held_out;  // one patient per fold, sorted
};

/// Leave-one-patient-out over the distinct ids.
FoldPlan make_patient_folds(const std::vector<std::string>& patient_ids);

struct FoldIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

FoldIndices fold_indices(const FoldPlan& plan, std::size_t fold, const std::vector<std::string>& patient_ids);

}  // namespace porc::ds
