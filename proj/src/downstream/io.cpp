// SPDX-License-Identifier: Apache-2.0
#include "porc/downstream/io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "porc/error.hpp"
#include "porc/util/binary_io.hpp"

namespace porc::ds {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  while (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw data_error(where + ": bad number '" + s + "'");
  }
  return v;
}

int to_int(const std::string& s, const std::string& where) {
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw data_error(where + ": bad label '" + s + "'");
  return v;
}

void check_id(const std::string& id) {
  if (id.find_first_of(",\n\r") != std::string::npos) throw data_error("csv: id '" + id + "' contains a separator");
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

std::string predictions_csv(const std::vector<PredictionRow>& rows) {
  const std::size_t C = rows.empty() ? 0 : rows.front().scores.size();
  std::string out = "id,true_label";
  for (std::size_t c = 0; c < C; ++c) out += ",score_" + std::to_string(c);
  out += '\n';
  for (const auto& r : rows) {
    check_id(r.id);
    if (r.scores.size() != C) throw shape_error("predictions: row '" + r.id + "' has a different score count");
    out += r.id + ',' + std::to_string(r.true_label);
    for (double s : r.scores) out += ',' + num(s);
    out += '\n';
  }
  return out;
}

std::vector<PredictionRow> parse_predictions_csv(const std::string& text, const std::string& what) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw data_error(what + ": empty file");
  const auto header = split(lines.front());
  if (header.size() < 3 || header[0] != "id" || header[1] != "true_label") {
    throw data_error(what + ":1: expected header id,true_label,score_0,...");
  }
  for (std::size_t c = 2; c < header.size(); ++c) {
    if (header[c] != "score_" + std::to_string(c - 2)) throw data_error(what + ":1: unexpected column '" + header[c] + "'");
  }
  std::vector<PredictionRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = what + ":" + std::to_string(i + 1);
    const auto cells = split(lines[i]);
    if (cells.size() != header.size()) throw data_error(where + ": expected " + std::to_string(header.size()) + " cells");
    PredictionRow r;
    r.id = cells[0];
    r.true_label = to_int(cells[1], where);
    for (std::size_t c = 2; c < cells.size(); ++c) r.scores.push_back(to_double(cells[c], where));
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRow>& rows) {
  io::write_text(path, predictions_csv(rows));
}

std::vector<PredictionRow> read_predictions(const std::filesystem::path& path) {
  return parse_predictions_csv(io::read_text(path), path.string());
}

std::string retrieval_csv(const std::vector<RetrievalRow>& rows) {
  std::string out = "query_id,rank,neighbor_id,label,distance\n";
  for (const auto& r : rows) {
    check_id(r.query_id);
    check_id(r.neighbor_id);
    out += fmt::format("{},{},{},{},{}\n", r.query_id, r.rank, r.neighbor_id, r.label, num(r.distance));
  }
  return out;
}

void write_retrieval(const std::filesystem::path& path, const std::vector<RetrievalRow>& rows) {
  io::write_text(path, retrieval_csv(rows));
}

LabeledFeatures read_labeled_features(const std::filesystem::path& path) {
  const auto lines = lines_of(io::read_text(path));
  const std::string what = path.string();
  if (lines.empty()) throw data_error(what + ": empty file");
  const auto header = split(lines.front());
  if (header.size() < 4 || header[0] != "id" || header[1] != "label" || header[2] != "patient") {
    throw data_error(what + ":1: expected header id,label,patient,f_0,...");
  }
  const std::size_t d = header.size() - 3;
  LabeledFeatures t;
  std::vector<double> data;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = what + ":" + std::to_string(i + 1);
    const auto cells = split(lines[i]);
    if (cells.size() != header.size()) throw data_error(where + ": expected " + std::to_string(header.size()) + " cells");
    t.ids.push_back(cells[0]);
    t.labels.push_back(to_int(cells[1], where));
    t.groups.push_back(cells[2]);
    for (std::size_t c = 3; c < cells.size(); ++c) data.push_back(to_double(cells[c], where));
  }
  t.features = nc::Tensor({t.ids.size(), d}, std::move(data));
  return t;
}

std::string labeled_features_csv(const LabeledFeatures& t) {
  const std::size_t d = t.features.cols();
  std::string out = "id,label,patient";
  for (std::size_t c = 0; c < d; ++c) out += ",f_" + std::to_string(c);
  out += '\n';
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    check_id(t.ids[i]);
    check_id(t.groups[i]);
    out += t.ids[i] + ',' + std::to_string(t.labels[i]) + ',' + t.groups[i];
    for (std::size_t c = 0; c < d; ++c) out += ',' + num(t.features.at(i, c));
    out += '\n';
  }
  return out;
}

}  // namespace porc::ds
