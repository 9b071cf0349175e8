// SPDX-License-Identifier: Apache-2.0
#include "porc/harness/registry.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "json.hpp"
#include "porc/error.hpp"
#include "porc/util/binary_io.hpp"

#ifndef PORC_DATA_DIR
#define PORC_DATA_DIR "data"
#endif

namespace porc::harness {

using nlohmann::json;

SplitSpec parse_split(const std::string& ratio, bool stratified) {
  SplitSpec s;
  s.ratio = ratio;
  s.stratified = stratified;
  if (ratio == "leave-one-patient-out") return s;
  static const std::set<std::string> known = {"8:1:1", "6:4", "3:2", "7:2:1", "4:1", "9:1", "8:2"};
  if (!known.count(ratio)) throw data_error("unknown split ratio '" + ratio + "'");
  std::istringstream is(ratio);
  std::string part;
  while (std::getline(is, part, ':')) s.parts.push_back(std::stoi(part));
  return s;
}

const std::vector<std::string>& protocol_metrics(const std::string& protocol) {
  static const std::map<std::string, std::vector<std::string>> table = {
      {"linear-probe", {"balanced_accuracy", "weighted_f1", "auc"}},
      {"abmil", {"balanced_accuracy", "weighted_f1", "auc"}},
      {"knn", {"acc@1", "acc@3", "acc@5", "mvacc@5"}},
      {"ridge", {"pearson_mean"}},
      {"segmentation-metrics-only", {"mpa", "miou", "mean_dice"}},
      {"detection-metrics-only", {"map@0.5"}},
  };
  const auto it = table.find(protocol);
  if (it == table.end()) throw data_error("unknown protocol '" + protocol + "'");
  return it->second;
}

namespace {

std::size_t line_of(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Byte offsets of the objects directly inside the top-level array.
std::vector<std::size_t> element_offsets(const std::string& text) {
  std::vector<std::size_t> out;
  int depth = 0;
  bool in_string = false, escaped = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{' || c == '[') {
      if (depth == 1) out.push_back(i);
      ++depth;
    } else if (c == '}' || c == ']') {
      --depth;
    }
  }
  return out;
}

TaskDescriptor parse_task(const json& j) {
  if (!j.is_object()) throw data_error("registry entry must be an object");
  TaskDescriptor t;
  t.id = j.at("id").get<int>();
  t.name = j.at("name").get<std::string>();
  t.category = j.at("category").get<std::string>();
  t.level = j.at("level").get<std::string>();
  t.protocol = j.at("protocol").get<std::string>();
  const auto& sp = j.at("split");
  t.split = parse_split(sp.at("ratio").get<std::string>(), sp.at("stratified").get<bool>());
  t.split.ratio_source = sp.value("ratio_source", "paper");
  t.metrics = j.at("metrics").get<std::vector<std::string>>();
  t.class_labels = j.at("class_labels").get<std::vector<std::string>>();
  if (j.contains("train")) {
    const auto& tr = j.at("train");
    t.train.epochs = tr.value("epochs", t.train.epochs);
    t.train.lr = tr.value("lr", t.train.lr);
    t.train.batch = tr.value("batch", t.train.batch);
    t.train.max_iters = tr.value("max_iters", t.train.max_iters);
  }
  t.genes = j.value("genes", std::size_t{0});
  t.quantity = j.at("quantity").get<std::size_t>();
  t.open_source = j.at("open_source").get<bool>();

  const auto& cats = category_order();
  if (std::find(cats.begin(), cats.end(), t.category) == cats.end()) throw data_error("unknown category '" + t.category + "'");
  if (t.level != "WSI" && t.level != "ROI") throw data_error("level must be WSI or ROI, got '" + t.level + "'");
  const auto& expected = protocol_metrics(t.protocol);
  for (const auto& m : t.metrics) {
    if (std::find(expected.begin(), expected.end(), m) == expected.end()) {
      throw data_error("metric '" + m + "' is not produced by protocol " + t.protocol);
    }
  }
  if (t.protocol == "abmil" && t.level != "WSI") throw data_error("abmil tasks must be WSI level");
  if (t.protocol == "ridge") {
    if (!t.split.leave_one_patient_out()) throw data_error("ridge tasks use leave-one-patient-out");
    if (t.genes == 0) throw data_error("ridge tasks need a gene count");
  } else {
    if (t.split.leave_one_patient_out()) throw data_error("leave-one-patient-out is only valid for ridge tasks");
    if (t.class_labels.size() < 2) throw data_error("classification tasks need at least two class labels");
  }
  if (t.train.epochs < 0 || t.train.batch < 1 || !(t.train.lr >= 0) || t.train.max_iters < 1 || t.train.max_iters > 1000) {
    throw data_error("invalid training hyperparameters");
  }
  return t;
}

}  // namespace

std::vector<TaskDescriptor> parse_registry(const std::string& text, const std::string& what, bool require_complete) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw data_error(what + ":" + std::to_string(line_of(text, e.byte == 0 ? 0 : e.byte - 1)) + ": " + e.what());
  }
  if (!doc.is_array()) throw data_error(what + ":1: registry must be a JSON array");
  const auto offsets = element_offsets(text);
  std::vector<TaskDescriptor> tasks;
  std::set<int> ids;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::size_t line = i < offsets.size() ? line_of(text, offsets[i]) : 1;
    const std::string where = what + ":" + std::to_string(line);
    try {
      TaskDescriptor t = parse_task(doc[i]);
      if (!ids.insert(t.id).second) throw data_error("duplicate task id " + std::to_string(t.id));
      tasks.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw data_error(where + ": " + e.what());
    } catch (const data_error& e) {
      throw data_error(where + ": " + e.what());
    }
  }
  if (require_complete) {
    if (tasks.size() != 112 || *ids.begin() != 1 || *ids.rbegin() != 112) {
      throw data_error(what + ": registry must list tasks 1..112 exactly once, found " + std::to_string(tasks.size()));
    }
    const std::map<std::string, std::size_t> want = {{"slide-preprocessing", 12}, {"pan-cancer", 3},
                                                     {"lesion-identification", 15}, {"cancer-subtyping", 36},
                                                     {"biomarker-evaluation", 36}, {"gene-expression", 10}};
    if (category_counts(tasks) != want) throw data_error(what + ": category totals differ from 12/3/15/36/36/10");
  }
  std::sort(tasks.begin(), tasks.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return tasks;
}

std::vector<TaskDescriptor> load_registry(const std::filesystem::path& path) {
  return parse_registry(io::read_text(path), path.string());
}

std::filesystem::path default_registry_path() { return std::filesystem::path(PORC_DATA_DIR) / "registry.json"; }

std::vector<TaskDescriptor> load_registry() { return load_registry(default_registry_path()); }

std::map<std::string, std::size_t> category_counts(const std::vector<TaskDescriptor>& tasks) {
  std::map<std::string, std::size_t> out;
  for (const auto& t : tasks) ++out[t.category];
  return out;
}

const TaskDescriptor& find_task(const std::vector<TaskDescriptor>& tasks, int id) {
  for (const auto& t : tasks)
    if (t.id == id) return t;
  throw data_error("no task with id " + std::to_string(id));
}

}  // namespace porc::harness
