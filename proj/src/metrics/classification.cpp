// SPDX-License-Identifier: Apache-2.0
#include "porc/metrics/classification.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "porc/error.hpp"

namespace porc::metrics {

int predicted_label(const PredictionRecord& r) {
  if (r.predicted >= 0) return r.predicted;
  if (r.scores.empty()) throw data_error("record '" + r.id + "' has neither scores nor a predicted label");
  for (double s : r.scores)
    if (!std::isfinite(s)) throw data_error("record '" + r.id + "' has a non-finite score");
  return static_cast<int>(std::max_element(r.scores.begin(), r.scores.end()) - r.scores.begin());
}

namespace {

void check_pair(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size()) throw shape_error("metrics: truth and prediction lengths differ");
  if (truth.empty()) throw data_error("metrics: no records");
}

std::vector<int> truths(const std::vector<PredictionRecord>& rs) {
  std::vector<int> out;
  for (const auto& r : rs) out.push_back(r.label);
  return out;
}

std::vector<int> preds(const std::vector<PredictionRecord>& rs) {
  std::vector<int> out;
  for (const auto& r : rs) out.push_back(predicted_label(r));
  return out;
}

}  // namespace

double accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
  check_pair(truth, pred);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double balanced_accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
  check_pair(truth, pred);
  std::map<int, std::pair<std::size_t, std::size_t>> per;  // class -> (correct, support)
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto& [c, n] = per[truth[i]];
    c += truth[i] == pred[i];
    ++n;
  }
  double s = 0.0;
  for (const auto& [_, cn] : per) s += static_cast<double>(cn.first) / static_cast<double>(cn.second);
  return s / static_cast<double>(per.size());
}

double weighted_f1(const std::vector<int>& truth, const std::vector<int>& pred) {
  check_pair(truth, pred);
  std::set<int> classes(truth.begin(), truth.end());
  classes.insert(pred.begin(), pred.end());
  double s = 0.0;
  for (int c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      tp += truth[i] == c && pred[i] == c;
      fp += truth[i] != c && pred[i] == c;
      fn += truth[i] == c && pred[i] != c;
    }
    const std::size_t support = tp + fn;
    if (support == 0 || tp == 0) continue;  // F1 term is 0
    const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
    s += static_cast<double>(support) * 2.0 * p * r / (p + r);
  }
  return s / static_cast<double>(truth.size());
}

double accuracy(const std::vector<PredictionRecord>& rs) { return accuracy(truths(rs), preds(rs)); }
double balanced_accuracy(const std::vector<PredictionRecord>& rs) { return balanced_accuracy(truths(rs), preds(rs)); }
double weighted_f1(const std::vector<PredictionRecord>& rs) { return weighted_f1(truths(rs), preds(rs)); }

double binary_auc(const std::vector<bool>& positive, const std::vector<double>& scores) {
  if (positive.size() != scores.size()) throw shape_error("auc: label and score lengths differ");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (double s : scores)
    if (!std::isfinite(s)) throw data_error("auc: non-finite score");
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks (1-based) over tie groups; sum ranks of positives.
  double rank_sum = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) {
        rank_sum += avg;
        ++npos;
      }
    i = j;
  }
  const std::size_t nneg = n - npos;
  if (npos == 0 || nneg == 0) throw data_error("auc: undefined with a single class present");
  const double np = static_cast<double>(npos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  const double pairs = np * static_cast<double>(nneg);
  // Symmetric evaluation so auc(y) + auc(1 - y) == 1 exactly.
  return 2.0 * u <= pairs ? u / pairs : 1.0 - (pairs - u) / pairs;
}

double roc_auc(const std::vector<PredictionRecord>& rs) {
  if (rs.empty()) throw data_error("auc: no records");
  const std::size_t C = rs.front().scores.size();
  if (C < 2) throw data_error("auc: records need at least two class scores");
  for (const auto& r : rs) {
    if (r.scores.size() != C) throw shape_error("auc: record '" + r.id + "' has a different score count");
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= C) throw data_error("auc: record '" + r.id + "' label out of range");
  }
  std::vector<double> s(rs.size());
  std::vector<bool> pos(rs.size());
  const auto one_vs_rest = [&](std::size_t c) {
    for (std::size_t i = 0; i < rs.size(); ++i) {
      s[i] = rs[i].scores[c];
      pos[i] = rs[i].label == static_cast<int>(c);
    }
    return binary_auc(pos, s);
  };
  if (C == 2) return one_vs_rest(1);
  std::set<int> present;
  for (const auto& r : rs) present.insert(r.label);
  if (present.size() < 2) throw data_error("auc: undefined with a single class present");
  double sum = 0.0;
  for (int c : present) sum += one_vs_rest(static_cast<std::size_t>(c));
  return sum / static_cast<double>(present.size());
}

double pearson_mean(const nc::Tensor& pred, const nc::Tensor& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw shape_error("pearson: shapes " + nc::shape_str(pred.shape()) + " and " + nc::shape_str(truth.shape()) + " differ");
  }
  const std::size_t n = pred.rows(), G = pred.cols();
  if (n < 2) throw data_error("pearson: need at least two rows");
  double total = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    double mp = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mp += pred.at(i, g);
      mt += truth.at(i, g);
    }
    mp /= static_cast<double>(n);
    mt /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double a = pred.at(i, g) - mp, b = truth.at(i, g) - mt;
      sxy += a * b;
      sxx += a * a;
      syy += b * b;
    }
    if (sxx == 0.0 || syy == 0.0) {
      spdlog::debug("pearson: column {} has zero variance, counted as 0", g);
      continue;
    }
    total += std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  }
  return total / static_cast<double>(G);
}

nlohmann::json classification_metrics(const std::vector<PredictionRecord>& records,
                                      const std::vector<std::string>& names) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& n : names) {
    if (n == "accuracy") out[n] = accuracy(records);
    else if (n == "balanced_accuracy") out[n] = balanced_accuracy(records);
    else if (n == "weighted_f1") out[n] = weighted_f1(records);
    else if (n == "auc") out[n] = roc_auc(records);
    else throw data_error("unknown classification metric '" + n + "'");
  }
  return out;
}

}  // namespace porc::metrics
