// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "porc/harness/registry.hpp"

namespace porc::harness {

struct SplitItem {
  int label = 0;
  std::string group;  // patient id; empty = its own group
};

/// Part sizes for n units under integer ratio weights: largest remainder,
/// then every part nonempty when n allows it.
std::vector<std::size_t> part_sizes(std::size_t n, const std::vector<int>& parts);

/// Partitions item indices into spec.parts.size() parts. Patient groups never
/// straddle parts; with stratification each class (by group majority label)
/// is spread proportionally. Deterministic per seed; each part sorted.
std::vector<std::vector<std::size_t>> split_dataset(const std::vector<SplitItem>& items, const SplitSpec& spec,
                                                    std::uint64_t seed);

}  // namespace porc::harness
