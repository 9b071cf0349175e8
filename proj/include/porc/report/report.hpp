// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace porc::report {

/// The closed IHC marker vocabulary (30 markers).
const std::vector<std::string>& marker_vocabulary();
bool is_known_marker(const std::string& marker);

const std::vector<std::string>& lymphoma_subtypes();  // FL, AITL, DLBCL, NKT, reactive

enum class IhcStatus { positive, negative, missing };
std::string to_string(IhcStatus s);
IhcStatus ihc_from_string(const std::string& s);

/// Suspected subtype -> ordered marker list.
struct PanelSpec {
  std::map<std::string, std::vector<std::string>> panels;

  const std::vector<std::string>& panel_for(const std::string& subtype) const;
};

PanelSpec parse_panels(const nlohmann::json& j);
PanelSpec load_panels(const std::filesystem::path& path);
/// Panels shipped in the data directory.
PanelSpec default_panels();

struct LymphomaReport {
  std::string patient;
  std::string subtype;
  std::vector<std::string> panel;
  std::map<std::string, IhcStatus> ihc;  // exactly the panel markers
};

/// Panel chosen by the predicted subtype; panel markers without a prediction are
/// reported missing. Predictions for markers outside the panel are dropped.
LymphomaReport compose_lymphoma(const std::string& patient, const std::string& subtype,
                                const std::map<std::string, IhcStatus>& ihc_preds, const PanelSpec& panels);

enum class Malignancy { positive, negative };
enum class Grade { cancerous, low_grade, high_grade };
enum class Polyp { hyperplastic, inflammatory, polypoid_hyperplasia, none };

std::string to_string(Malignancy m);
std::string to_string(Grade g);
std::string to_string(Polyp p);
Malignancy malignancy_from_string(const std::string& s);
Grade grade_from_string(const std::string& s);
Polyp polyp_from_string(const std::string& s);

/// Holds a grade iff malignant and a polyp type iff not; only compose_colorectal builds one.
class ColorectalReport {
 public:
  const std::string& patient() const { return patient_; }
  Malignancy malignancy() const { return malignancy_; }
  std::optional<Grade> grade() const { return grade_; }
  std::optional<Polyp> polyp() const { return polyp_; }

 private:
  friend ColorectalReport compose_colorectal(const std::string&, Malignancy, std::optional<Grade>,
                                             std::optional<Polyp>);
  ColorectalReport() = default;
  std::string patient_;
  Malignancy malignancy_ = Malignancy::negative;
  std::optional<Grade> grade_;
  std::optional<Polyp> polyp_;
};

/// positive needs a grade and forbids a polyp; negative forbids a grade, polyp defaults to none.
ColorectalReport compose_colorectal(const std::string& patient, Malignancy malignancy, std::optional<Grade> grade,
                                    std::optional<Polyp> polyp);

nlohmann::json to_json(const LymphomaReport& r);
nlohmann::json to_json(const ColorectalReport& r);
LymphomaReport lymphoma_from_json(const nlohmann::json& j);
/// Canonical serialization: sorted keys, two-space indent, trailing newline.
std::string canonical(const nlohmann::json& j);

enum class Cell { agree, disagree, missing };
std::string to_string(Cell c);

struct AgreementCell {
  std::string patient;
  std::string marker;
  IhcStatus model = IhcStatus::missing;
  IhcStatus truth = IhcStatus::missing;
  Cell cell = Cell::missing;
};

struct AgreementMatrix {
  std::vector<AgreementCell> cells;
  std::size_t agree = 0;
  std::size_t disagree = 0;
  std::size_t missing = 0;
  std::optional<double> rate;  // empty when no cell is comparable

  std::string rate_text() const;  // value or "no-comparable-cells"
};

/// Cells cover each patient x (union of both reports' panels). Missing on either side -> missing.
AgreementMatrix agreement(const std::vector<LymphomaReport>& model, const std::vector<LymphomaReport>& truth);
std::string agreement_csv(const AgreementMatrix& m);

}  // namespace porc::report
