// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"
#include "porc/error.hpp"
#include "porc/report/report.hpp"
#include "porc/util/random.hpp"

using namespace porc;
using namespace porc::report;

TEST_CASE("vocabulary and panels") {
  CHECK(marker_vocabulary().size() == 30);
  CHECK(is_known_marker("CD20"));
  CHECK(!is_known_marker("CD999"));
  const auto panels = default_panels();
  for (const auto& [subtype, markers] : panels.panels)
    for (const auto& m : markers) CHECK(is_known_marker(m));
  const auto& aitl = panels.panel_for("AITL");
  for (const char* m : {"CD20", "CXCL-13", "CD10"}) CHECK(std::find(aitl.begin(), aitl.end(), m) != aitl.end());
  CHECK_THROWS_AS(panels.panel_for("bogus"), data_error);
  CHECK_THROWS_AS(parse_panels(nlohmann::json{{"AITL", {"CD20", "NOPE"}}}), data_error);
}

TEST_CASE("lymphoma composition") {
  const auto panels = default_panels();
  const auto& aitl = panels.panel_for("AITL");
  SUBCASE("withheld markers are reported missing") {
    std::map<std::string, IhcStatus> preds;
    for (const auto& m : aitl)
      if (m != "CD20" && m != "CXCL-13" && m != "CD10") preds[m] = IhcStatus::positive;
    const auto r = compose_lymphoma("P1", "AITL", preds, panels);
    std::vector<std::string> missing;
    for (const auto& [m, s] : r.ihc)
      if (s == IhcStatus::missing) missing.push_back(m);
    std::sort(missing.begin(), missing.end());
    CHECK(missing == std::vector<std::string>{"CD10", "CD20", "CXCL-13"});
    CHECK(r.ihc.size() == aitl.size());
  }
  SUBCASE("empty predictions -> all missing; full panel -> identity") {
    const auto e = compose_lymphoma("P", "DLBCL", {}, panels);
    for (const auto& [m, s] : e.ihc) CHECK(s == IhcStatus::missing);
    std::map<std::string, IhcStatus> full;
    int i = 0;
    for (const auto& m : aitl) full[m] = (i++ % 2) ? IhcStatus::positive : IhcStatus::negative;
    CHECK(compose_lymphoma("P", "AITL", full, panels).ihc == full);
  }
  SUBCASE("markers outside the panel are dropped; unknown markers rejected by name") {
    std::map<std::string, IhcStatus> preds{{aitl.front(), IhcStatus::positive}};
    for (const auto& m : marker_vocabulary())
      if (std::find(aitl.begin(), aitl.end(), m) == aitl.end()) {
        preds[m] = IhcStatus::negative;
        const auto r = compose_lymphoma("P", "AITL", preds, panels);
        CHECK(r.ihc.count(m) == 0);
        break;
      }
    try {
      compose_lymphoma("P", "AITL", {{"CD999", IhcStatus::positive}}, panels);
      FAIL("expected data_error");
    } catch (const data_error& e) {
      CHECK(std::string(e.what()).find("CD999") != std::string::npos);
    }
    CHECK_THROWS_AS(compose_lymphoma("P", "Burkitt", {}, panels), data_error);
  }
  SUBCASE("json round-trip is canonical") {
    const auto r = compose_lymphoma("P", "AITL", {{"CD3", IhcStatus::positive}}, panels);
    const auto back = lymphoma_from_json(to_json(r));
    CHECK(canonical(to_json(back)) == canonical(to_json(r)));
    CHECK(to_json(r).at("disease") == "lymphoma");
  }
}

TEST_CASE("colorectal composition") {
  const auto hg = compose_colorectal("P", Malignancy::positive, Grade::high_grade, std::nullopt);
  CHECK(hg.grade() == Grade::high_grade);
  CHECK(!hg.polyp().has_value());
  const auto hp = compose_colorectal("P", Malignancy::negative, std::nullopt, Polyp::hyperplastic);
  CHECK(hp.polyp() == Polyp::hyperplastic);
  CHECK(compose_colorectal("P", Malignancy::negative, std::nullopt, std::nullopt).polyp() == Polyp::none);
  CHECK_THROWS_AS(compose_colorectal("P", Malignancy::positive, std::nullopt, Polyp::inflammatory), data_error);
  CHECK_THROWS_AS(compose_colorectal("P", Malignancy::negative, Grade::low_grade, std::nullopt), data_error);
  CHECK_THROWS_AS(compose_colorectal("P", Malignancy::positive, std::nullopt, std::nullopt), data_error);
  const auto j = to_json(hg);
  CHECK(j.at("malignancy") == "positive");
  CHECK(j.at("grade") == "high-grade");
  CHECK(!j.contains("polyp"));
}

TEST_CASE("colorectal grade-xor-polyp fuzz") {
  Rng rng(99);
  std::size_t built = 0, violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto mal = rng.bernoulli(0.5) ? Malignancy::positive : Malignancy::negative;
    std::optional<Grade> g;
    std::optional<Polyp> p;
    if (rng.bernoulli(0.5)) g = static_cast<Grade>(rng.below(3));
    if (rng.bernoulli(0.5)) p = static_cast<Polyp>(rng.below(4));
    try {
      const auto r = compose_colorectal("P" + std::to_string(i), mal, g, p);
      ++built;
      const bool ok = r.grade().has_value() != r.polyp().has_value() &&
                      (r.malignancy() == Malignancy::positive) == r.grade().has_value();
      violations += !ok;
    } catch (const data_error&) {
    }
  }
  CHECK(built > 1000);
  CHECK(violations == 0);
}

TEST_CASE("agreement") {
  const auto panels = default_panels();
  const auto& aitl = panels.panel_for("AITL");
  std::map<std::string, IhcStatus> four;
  for (std::size_t i = 0; i < 4; ++i) four[aitl[i]] = IhcStatus::positive;
  const auto truth = compose_lymphoma("P", "AITL", four, panels);
  CHECK(agreement({truth}, {truth}).rate == 1.0);
  auto flipped = four;
  flipped[aitl[0]] = IhcStatus::negative;
  const auto model = compose_lymphoma("P", "AITL", flipped, panels);
  const auto m = agreement({model}, {truth});
  CHECK(m.agree == 3);
  CHECK(m.disagree == 1);
  CHECK(m.rate == 0.75);
  const auto swapped = agreement({truth}, {model});
  CHECK(swapped.agree == m.agree);
  CHECK(swapped.disagree == m.disagree);
  const auto empty = compose_lymphoma("P", "AITL", {}, panels);
  const auto none = agreement({empty}, {truth});
  CHECK(!none.rate.has_value());
  CHECK(none.rate_text() == "no-comparable-cells");
  CHECK(m.cells.size() == aitl.size());
  CHECK(agreement_csv(m).rfind("patient,marker,model,truth,cell\n", 0) == 0);
}
