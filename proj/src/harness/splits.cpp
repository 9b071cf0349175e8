// SPDX-License-Identifier: Apache-2.0
#include "porc/harness/splits.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

#include "porc/error.hpp"
#include "porc/util/random.hpp"

namespace porc::harness {

std::vector<std::size_t> part_sizes(std::size_t n, const std::vector<int>& parts) {
  if (parts.empty()) throw data_error("split: no parts");
  double total = 0;
  for (int p : parts) {
    if (p <= 0) throw data_error("split: ratio parts must be positive");
    total += p;
  }
  std::vector<std::size_t> sizes(parts.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const double exact = static_cast<double>(n) * parts[i] / total;
    sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    used += sizes[i];
    rem.emplace_back(exact - static_cast<double>(sizes[i]), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++sizes[rem[k % rem.size()].second];
  if (n >= parts.size()) {
    for (auto& s : sizes) {
      if (s > 0) continue;
      auto big = std::max_element(sizes.begin(), sizes.end());
      --*big;
      s = 1;
    }
  }
  return sizes;
}

std::vector<std::vector<std::size_t>> split_dataset(const std::vector<SplitItem>& items, const SplitSpec& spec,
                                                    std::uint64_t seed) {
  if (spec.leave_one_patient_out()) throw data_error("split: leave-one-patient-out is planned by patient folds");
  const std::size_t P = spec.parts.size();
  if (items.size() < P) {
    throw data_error("split: " + std::to_string(items.size()) + " items cannot fill " + std::to_string(P) + " parts");
  }

  // Units are patient groups; a unit's class is its majority label (ties -> smallest).
  std::map<std::string, std::vector<std::size_t>> by_group;
  std::vector<std::vector<std::size_t>> units;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].group.empty()) units.push_back({i});
    else by_group[items[i].group].push_back(i);
  }
  for (auto& [_, idx] : by_group) units.push_back(idx);
  std::map<int, std::vector<std::size_t>> by_class;  // class -> unit indices
  for (std::size_t u = 0; u < units.size(); ++u) {
    std::map<int, std::size_t> votes;
    for (std::size_t i : units[u]) ++votes[items[i].label];
    int best = votes.begin()->first;
    for (const auto& [label, c] : votes)
      if (c > votes[best]) best = label;
    by_class[spec.stratified ? best : 0].push_back(u);
  }

  Rng rng(seed);
  for (auto& [_, us] : by_class) rng.shuffle(us);

  // Per-class floors, then hand out the remaining units so part totals hit the global targets.
  const std::vector<std::size_t> target = part_sizes(units.size(), spec.parts);
  const double total = std::accumulate(spec.parts.begin(), spec.parts.end(), 0.0);
  std::map<int, std::vector<std::size_t>> quota;
  std::vector<std::size_t> assigned(P, 0);
  struct Extra {
    double frac;
    int cls;
    std::size_t part;
  };
  std::vector<Extra> extras;
  std::map<int, std::size_t> left;
  for (const auto& [c, us] : by_class) {
    auto& q = quota[c];
    q.assign(P, 0);
    std::size_t used = 0;
    for (std::size_t p = 0; p < P; ++p) {
      const double exact = static_cast<double>(us.size()) * spec.parts[p] / total;
      q[p] = static_cast<std::size_t>(std::floor(exact + 1e-9));
      used += q[p];
      assigned[p] += q[p];
      extras.push_back({exact - static_cast<double>(q[p]), c, p});
    }
    left[c] = us.size() - used;
    if (spec.stratified && us.size() < P) {
      spdlog::warn("split: class {} has {} units for {} parts; stratification is best effort", c, us.size(), P);
    }
  }
  std::stable_sort(extras.begin(), extras.end(), [](const Extra& a, const Extra& b) { return a.frac > b.frac; });
  for (const Extra& e : extras) {
    if (left[e.cls] > 0 && assigned[e.part] < target[e.part]) {
      ++quota[e.cls][e.part];
      ++assigned[e.part];
      --left[e.cls];
    }
  }
  // Whatever the greedy pass could not place goes to the parts still short of target.
  for (auto& [c, n] : left) {
    for (std::size_t p = 0; p < P && n > 0; ++p) {
      while (n > 0 && assigned[p] < target[p]) {
        ++quota[c][p];
        ++assigned[p];
        --n;
      }
    }
  }

  std::vector<std::vector<std::size_t>> out(P);
  for (const auto& [c, us] : by_class) {
    std::size_t k = 0;
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t j = 0; j < quota[c][p]; ++j, ++k)
        for (std::size_t i : units[us[k]]) out[p].push_back(i);
  }
  for (auto& part : out) std::sort(part.begin(), part.end());
  return out;
}

}  // namespace porc::harness
