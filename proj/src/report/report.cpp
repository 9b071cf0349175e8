// SPDX-License-Identifier: Apache-2.0
#include "porc/report/report.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "porc/error.hpp"
#include "porc/util/binary_io.hpp"

#ifndef PORC_DATA_DIR
#define PORC_DATA_DIR "data"
#endif

namespace porc::report {

using nlohmann::json;

const std::vector<std::string>& marker_vocabulary() {
  static const std::vector<std::string> v = {
      "CD5",  "CD3",  "CD20", "CD79a",      "CD21",  "EBER",     "CD10", "Bcl-6", "Bcl-2", "MUM-1",
      "CD4",  "CD23", "PD-1", "Cyclin D1",  "CD19",  "CD22",     "CD8",  "C-myc", "CD56",  "Granzyme B",
      "TIA-1", "Perforin", "CD2", "CD30",   "CD7",   "CD38",     "ICOS", "CXCL-13", "ALK", "PD-L1"};
  return v;
}

bool is_known_marker(const std::string& m) {
  const auto& v = marker_vocabulary();
  return std::find(v.begin(), v.end(), m) != v.end();
}

const std::vector<std::string>& lymphoma_subtypes() {
  static const std::vector<std::string> v = {"FL", "AITL", "DLBCL", "NKT", "reactive"};
  return v;
}

namespace {

void check_subtype(const std::string& s) {
  const auto& v = lymphoma_subtypes();
  if (std::find(v.begin(), v.end(), s) == v.end()) throw data_error("unknown lymphoma subtype '" + s + "'");
}

template <class E>
E enum_from(const std::string& s, const std::vector<std::pair<E, const char*>>& table, const char* what) {
  for (const auto& [e, name] : table)
    if (s == name) return e;
  throw data_error(fmt::format("unknown {} '{}'", what, s));
}

template <class E>
std::string enum_to(E e, const std::vector<std::pair<E, const char*>>& table) {
  for (const auto& [x, name] : table)
    if (x == e) return name;
  return "?";
}

const std::vector<std::pair<IhcStatus, const char*>> kIhc = {
    {IhcStatus::positive, "positive"}, {IhcStatus::negative, "negative"}, {IhcStatus::missing, "missing"}};
const std::vector<std::pair<Malignancy, const char*>> kMalignancy = {{Malignancy::positive, "positive"},
                                                                     {Malignancy::negative, "negative"}};
const std::vector<std::pair<Grade, const char*>> kGrade = {
    {Grade::cancerous, "cancerous"}, {Grade::low_grade, "low-grade"}, {Grade::high_grade, "high-grade"}};
const std::vector<std::pair<Polyp, const char*>> kPolyp = {{Polyp::hyperplastic, "hyperplastic"},
                                                           {Polyp::inflammatory, "inflammatory"},
                                                           {Polyp::polypoid_hyperplasia, "polypoid-hyperplasia"},
                                                           {Polyp::none, "none"}};

}  // namespace

std::string to_string(IhcStatus s) { return enum_to(s, kIhc); }
IhcStatus ihc_from_string(const std::string& s) { return enum_from(s, kIhc, "IHC status"); }
std::string to_string(Malignancy m) { return enum_to(m, kMalignancy); }
std::string to_string(Grade g) { return enum_to(g, kGrade); }
std::string to_string(Polyp p) { return enum_to(p, kPolyp); }
Malignancy malignancy_from_string(const std::string& s) { return enum_from(s, kMalignancy, "malignancy"); }
Grade grade_from_string(const std::string& s) { return enum_from(s, kGrade, "grade"); }
Polyp polyp_from_string(const std::string& s) { return enum_from(s, kPolyp, "polyp type"); }

const std::vector<std::string>& PanelSpec::panel_for(const std::string& subtype) const {
  check_subtype(subtype);
  const auto it = panels.find(subtype);
  if (it == panels.end()) throw data_error("no IHC panel configured for subtype " + subtype);
  return it->second;
}

PanelSpec parse_panels(const json& j) {
  if (!j.is_object()) throw data_error("panels: expected an object of subtype -> marker list");
  PanelSpec spec;
  for (const auto& [subtype, list] : j.items()) {
    check_subtype(subtype);
    std::vector<std::string> markers;
    try {
      markers = list.get<std::vector<std::string>>();
    } catch (const json::exception&) {
      throw data_error("panels: " + subtype + " must be a list of marker names");
    }
    for (const auto& m : markers) {
      if (!is_known_marker(m)) throw data_error("panels: unknown marker '" + m + "' in " + subtype);
      if (std::count(markers.begin(), markers.end(), m) > 1) throw data_error("panels: duplicate marker '" + m + "' in " + subtype);
    }
    spec.panels[subtype] = std::move(markers);
  }
  return spec;
}

PanelSpec load_panels(const std::filesystem::path& path) {
  try {
    return parse_panels(json::parse(io::read_text(path)));
  } catch (const json::parse_error& e) {
    throw data_error(path.string() + ": " + e.what());
  }
}

PanelSpec default_panels() { return load_panels(std::filesystem::path(PORC_DATA_DIR) / "panels.json"); }

LymphomaReport compose_lymphoma(const std::string& patient, const std::string& subtype,
                                const std::map<std::string, IhcStatus>& ihc_preds, const PanelSpec& panels) {
  for (const auto& [marker, status] : ihc_preds) {
    if (!is_known_marker(marker)) throw data_error("unknown IHC marker '" + marker + "'");
    if (status == IhcStatus::missing) throw data_error("IHC prediction for " + marker + " must be positive or negative");
  }
  LymphomaReport r;
  r.patient = patient;
  r.subtype = subtype;
  r.panel = panels.panel_for(subtype);
  for (const auto& m : r.panel) {
    const auto it = ihc_preds.find(m);
    r.ihc[m] = it == ihc_preds.end() ? IhcStatus::missing : it->second;
  }
  return r;
}

ColorectalReport compose_colorectal(const std::string& patient, Malignancy malignancy, std::optional<Grade> grade,
                                    std::optional<Polyp> polyp) {
  if (malignancy == Malignancy::positive) {
    if (polyp) throw data_error("colorectal: a malignant report cannot carry a polyp type");
    if (!grade) throw data_error("colorectal: a malignant report needs a grade");
  } else {
    if (grade) throw data_error("colorectal: a non-malignant report cannot carry a grade");
    if (!polyp) polyp = Polyp::none;
  }
  ColorectalReport r;
  r.patient_ = patient;
  r.malignancy_ = malignancy;
  r.grade_ = grade;
  r.polyp_ = polyp;
  return r;
}

json to_json(const LymphomaReport& r) {
  json ihc = json::object();
  for (const auto& [m, s] : r.ihc) ihc[m] = to_string(s);
  return {{"patient", r.patient}, {"disease", "lymphoma"}, {"subtype", r.subtype}, {"panel", r.panel}, {"ihc", ihc}};
}

json to_json(const ColorectalReport& r) {
  json j = {{"patient", r.patient()}, {"disease", "colorectal"}, {"malignancy", to_string(r.malignancy())}};
  if (r.grade()) j["grade"] = to_string(*r.grade());
  if (r.polyp()) j["polyp"] = to_string(*r.polyp());
  return j;
}

LymphomaReport lymphoma_from_json(const json& j) {
  try {
    if (j.at("disease") != "lymphoma") throw data_error("report: expected a lymphoma report");
    LymphomaReport r;
    r.patient = j.at("patient").get<std::string>();
    r.subtype = j.at("subtype").get<std::string>();
    check_subtype(r.subtype);
    r.panel = j.at("panel").get<std::vector<std::string>>();
    for (const auto& m : r.panel)
      if (!is_known_marker(m)) throw data_error("report: unknown marker '" + m + "'");
    for (const auto& [m, s] : j.at("ihc").items()) {
      if (std::find(r.panel.begin(), r.panel.end(), m) == r.panel.end()) {
        throw data_error("report: marker '" + m + "' is outside the panel");
      }
      r.ihc[m] = ihc_from_string(s.get<std::string>());
    }
    for (const auto& m : r.panel)
      if (!r.ihc.count(m)) throw data_error("report: panel marker '" + m + "' has no entry");
    return r;
  } catch (const json::exception& e) {
    throw data_error(std::string("report: ") + e.what());
  }
}

std::string canonical(const json& j) { return j.dump(2) + "\n"; }

std::string to_string(Cell c) {
  switch (c) {
    case Cell::agree: return "agree";
    case Cell::disagree: return "disagree";
    default: return "missing";
  }
}

std::string AgreementMatrix::rate_text() const { return rate ? fmt::format("{:.17g}", *rate) : "no-comparable-cells"; }

AgreementMatrix agreement(const std::vector<LymphomaReport>& model, const std::vector<LymphomaReport>& truth) {
  std::map<std::string, const LymphomaReport*> by_patient;
  for (const auto& t : truth) {
    if (!by_patient.emplace(t.patient, &t).second) throw data_error("agreement: duplicate truth patient " + t.patient);
  }
  if (model.size() != truth.size()) throw data_error("agreement: model and truth cover different patients");
  AgreementMatrix out;
  for (const auto& m : model) {
    const auto it = by_patient.find(m.patient);
    if (it == by_patient.end()) throw data_error("agreement: no truth report for patient " + m.patient);
    const LymphomaReport& t = *it->second;
    std::vector<std::string> markers = m.panel;
    for (const auto& x : t.panel)
      if (std::find(markers.begin(), markers.end(), x) == markers.end()) markers.push_back(x);
    for (const auto& marker : markers) {
      AgreementCell c;
      c.patient = m.patient;
      c.marker = marker;
      if (auto a = m.ihc.find(marker); a != m.ihc.end()) c.model = a->second;
      if (auto b = t.ihc.find(marker); b != t.ihc.end()) c.truth = b->second;
      if (c.model == IhcStatus::missing || c.truth == IhcStatus::missing) {
        c.cell = Cell::missing;
        ++out.missing;
      } else if (c.model == c.truth) {
        c.cell = Cell::agree;
        ++out.agree;
      } else {
        c.cell = Cell::disagree;
        ++out.disagree;
      }
      out.cells.push_back(std::move(c));
    }
  }
  if (out.agree + out.disagree > 0) {
    out.rate = static_cast<double>(out.agree) / static_cast<double>(out.agree + out.disagree);
  }
  return out;
}

std::string agreement_csv(const AgreementMatrix& m) {
  std::string out = "patient,marker,model,truth,cell\n";
  for (const auto& c : m.cells) {
    out += fmt::format("{},{},{},{},{}\n", c.patient, c.marker, to_string(c.model), to_string(c.truth), to_string(c.cell));
  }
  return out;
}

}  // namespace porc::report
