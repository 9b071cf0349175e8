// SPDX-License-Identifier: Apache-2.0
// One PASS/FAIL line per acceptance criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "porc/downstream/abmil.hpp"
#include "porc/downstream/linear_probe.hpp"
#include "porc/downstream/ridge.hpp"
#include "porc/error.hpp"
#include "porc/harness/registry.hpp"
#include "porc/metrics/classification.hpp"
#include "porc/metrics/geometry.hpp"
#include "porc/numeric/ops.hpp"
#include "porc/numeric/optim.hpp"
#include "porc/report/report.hpp"
#include "porc/slide/container.hpp"
#include "porc/slide/tissue.hpp"
#include "porc/ssl/losses.hpp"
#include "porc/ssl/trainer.hpp"
#include "porc/util/binary_io.hpp"
#include "support.hpp"

#ifndef PORC_CLI
#error "PORC_CLI must name the porc executable"
#endif

namespace fs = std::filesystem;
using namespace porc;
using nc::Tape;
using nc::Tensor;
using nc::Var;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

// 1
Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::map<std::string, double> worst;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(derive_seed(2024, s));
    {
      const std::size_t K = 4 + rng.below(12), vs = 2 + rng.below(6);
      const Tensor teacher = test::random_tensor(rng, {2, K}, -2, 2);
      const Tensor center = test::random_tensor(rng, {1, K}, -0.2, 0.2);
      const double tt = rng.uniform(0.04, 0.4);
      Tensor student = test::random_tensor(rng, {vs, K}, -1, 1);
      worst["dino"] = std::max(worst["dino"], test::grad_check({&student}, [&](Tape& t) {
        return ssl::dino_loss(teacher, t.param(student), center, tt, 0.1);
      }));
    }
    {
      const std::size_t T = 4 + rng.below(13), K = 4 + rng.below(12);
      std::vector<bool> mask(T, false);
      for (std::size_t i = 0; i < T; ++i) mask[i] = rng.bernoulli(0.4);
      mask[rng.below(T)] = true;
      const Tensor teacher = test::random_tensor(rng, {T, K}, -2, 2);
      const Tensor center = test::random_tensor(rng, {1, K}, -0.2, 0.2);
      Tensor student = test::random_tensor(rng, {T, K}, -1, 1);
      worst["ibot"] = std::max(worst["ibot"], test::grad_check({&student}, [&](Tape& t) {
        return ssl::ibot_loss(teacher, t.param(student), mask, center, 0.07, 0.1);
      }));
    }
    {
      Tensor f = test::random_tensor(rng, {3 + rng.below(8), 2 + rng.below(7)}, -1, 1);
      worst["koleo"] = std::max(worst["koleo"], test::grad_check({&f}, [&](Tape& t) { return ssl::koleo_loss(t.param(f)); }));
    }
    {
      const std::size_t d = 3 + rng.below(4), h = 3 + rng.below(3), C = 2 + rng.below(2), n = 2 + rng.below(5);
      ds::AbmilModel m = ds::init_abmil(d, h, C, rng.next_u64());
      m.weight = test::random_tensor(rng, {C, d}, -0.5, 0.5);
      m.bias = test::random_tensor(rng, {1, C}, -0.5, 0.5);
      const ds::Bag bag{test::random_tensor(rng, {n, d}, -1, 1), static_cast<int>(rng.below(C)), "b"};
      worst["abmil"] = std::max(worst["abmil"], test::grad_check(m.params(), [&](Tape& t) { return ds::abmil_loss(t, m, bag); }));
    }
    {
      const std::size_t C = 2 + rng.below(3), d = 2 + rng.below(4), n = 5 + rng.below(10);
      ds::LinearProbe p;
      p.classes = C;
      p.weight = test::random_tensor(rng, {C, d});
      p.bias = test::random_tensor(rng, {1, C});
      const Tensor x = test::random_tensor(rng, {n, d}, -2, 2);
      std::vector<int> y(n);
      for (auto& v : y) v = static_cast<int>(rng.below(C));
      worst["linear-probe"] = std::max(worst["linear-probe"], test::grad_check({&p.weight, &p.bias}, [&](Tape& t) {
        return ds::probe_cross_entropy(t, p, x, y);
      }));
    }
  }
  const double secs = seconds_since(t0);
  bool ok = secs < 60.0;
  std::string detail;
  for (const auto& [k, v] : worst) {
    ok = ok && v <= 1e-4;
    detail += fmt::format("{} {:.1e}, ", k, v);
  }
  return {ok, detail + fmt::format("{:.1f}s", secs)};
}

// 2
Outcome loss_closed_forms() {
  Tape tape;
  double worst_dino = 0.0;
  for (std::size_t K : {2, 8, 64, 65536}) {
    const double l =
        ssl::dino_loss(Tensor::zeros({2, K}), tape.constant(Tensor::zeros({4, K})), Tensor::zeros({1, K}), 0.04, 0.1)
            .value()
            .item();
    worst_dino = std::max(worst_dino, std::abs(l - std::log(static_cast<double>(K))));
  }
  const double ibot =
      ssl::ibot_loss(Tensor::zeros({4, 8}), tape.constant(Tensor::zeros({4, 8})), std::vector<bool>(4, false),
                     Tensor::zeros({1, 8}), 0.04, 0.1)
          .value()
          .item();
  const double koleo = ssl::koleo_loss(tape.constant(Tensor::matrix(2, 3, {0, 1, 0, 0, 0, 1}))).value().item();
  const double koleo_err = std::abs(koleo + std::log(std::sqrt(2.0)));
  return {worst_dino <= 1e-12 && ibot == 0.0 && koleo_err <= 1e-12,
          fmt::format("|dino - ln K| {:.1e}, ibot(empty) {}, |koleo + ln sqrt2| {:.1e}", worst_dino, ibot, koleo_err)};
}

// 3
Outcome schedule_endpoints() {
  const ssl::SslHyper h;  // paper table values
  const std::int64_t T = h.total_steps(), W = h.warmup_epochs * h.steps_per_epoch;
  const std::int64_t TW = h.warmup_teacher_temp_epochs * h.steps_per_epoch;
  bool ok = true;
  const auto expect = [&](double got, double want) { ok = ok && got == want; };
  expect(nc::schedule_value(h.lr_schedule(), 0), 0.0);
  expect(nc::schedule_value(h.lr_schedule(), W), 2e-3);
  expect(nc::schedule_value(h.lr_schedule(), T), 1e-6);
  expect(nc::schedule_value(h.teacher_temp_schedule(), 0), 0.04);
  expect(nc::schedule_value(h.teacher_temp_schedule(), TW), 0.4);
  expect(nc::schedule_value(h.momentum_schedule(), 0), 0.992);
  expect(nc::schedule_value(h.momentum_schedule(), T), 1.0);
  expect(nc::schedule_value(h.weight_decay_schedule(), 0), 0.04);
  expect(nc::schedule_value(h.weight_decay_schedule(), T), 0.4);
  expect(h.clip_norm, 3.0);

  Tensor g = Tensor::row({6.0, 8.0}, true);
  g.zero_grad();
  g.mutable_grad()[0] = 6.0;
  g.mutable_grad()[1] = 8.0;
  std::vector<Tensor*> ps{&g};
  const double before = nc::clip_global_norm(ps, h.clip_norm);
  const double after = std::hypot(g.grad()[0], g.grad()[1]);
  ok = ok && before == 10.0 && std::abs(after - 3.0) <= 1e-12;
  return {ok, fmt::format("lr 0 -> 2e-3 -> 1e-6, tt 0.04 -> 0.4, m 0.992 -> 1, wd 0.04 -> 0.4; clipped norm {:.15g}", after)};
}

// 4
Outcome ema_closed_form() {
  Rng rng(5);
  ssl::ParamSet teacher{{"a", test::random_tensor(rng, {3, 4})}, {"b", test::random_tensor(rng, {1, 7})}};
  const ssl::ParamSet t0 = teacher;
  const ssl::ParamSet student{{"a", test::random_tensor(rng, {3, 4})}, {"b", test::random_tensor(rng, {1, 7})}};
  const double m = 0.992;
  for (int k = 0; k < 100; ++k) ssl::ema_update(teacher, student, m);
  const double mk = std::pow(m, 100);
  double err = 0.0;
  for (const auto& [name, t] : teacher)
    for (std::size_t i = 0; i < t.size(); ++i)
      err = std::max(err, std::abs(t[i] - (mk * t0.at(name)[i] + (1 - mk) * student.at(name)[i])));
  return {err < 1e-12, fmt::format("max error {:.1e}", err)};
}

// 5
Outcome collapse_sentinel() {
  const auto t0 = Clock::now();
  double ent[2] = {0, 0}, lnk = 0;
  for (int centering = 0; centering < 2; ++centering) {
    ssl::SslHyper h = ssl::SslHyper::desk();
    h.steps_per_epoch = 500;  // the whole run sits inside the first epoch's schedules
    h.lambda_koleo = 0.0;
    h.centering = centering == 1;
    h.seed = 11;
    ssl::SslState st = ssl::SslState::init(h);
    const std::vector<slide::RgbImage> constant{slide::RgbImage(h.crops.global_size, h.crops.global_size, 128)};
    const auto log = ssl::pretrain(st, constant, h, 500, h.batch_size);
    ent[centering] = log.back().teacher_entropy;
    lnk = std::log(static_cast<double>(h.head.prototypes));
  }
  const double secs = seconds_since(t0);
  return {ent[0] < 0.01 * lnk && ent[1] > 0.1 * lnk && secs < 300.0,
          fmt::format("entropy/lnK off {:.4f}, on {:.4f}; {:.1f}s", ent[0] / lnk, ent[1] / lnk, secs)};
}

// 6
Outcome downstream_sanity() {
  Rng rng(1);
  std::vector<double> xd;
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) {
    const int c = i % 2;
    const double off = rng.uniform(0.0, 2.0);
    xd.push_back(c == 0 ? -0.5 - off : 0.5 + off);
    xd.push_back(rng.uniform(-3, 3));
    y.push_back(c);
  }
  const Tensor x({200, 2}, std::move(xd));
  ds::ProbeConfig cfg;
  cfg.min_improvement = 0.0;
  const auto probe = ds::train_linear_probe(x, y, cfg);
  const double probe_acc = metrics::accuracy(y, ds::probe_predict(probe, x));

  const auto bags = [](std::uint64_t seed) {
    Rng r(seed);
    std::vector<ds::Bag> out;
    for (int b = 0; b < 40; ++b) {
      const int label = b % 2;
      const std::size_t k = label == 1 ? 1 + r.below(2) : 0;
      std::vector<double> v;
      for (std::size_t i = 0; i < 6; ++i)
        for (int j = 0; j < 8; ++j) v.push_back(r.normal(i < k ? 3.0 : 0.0, 1.0));
      out.push_back({Tensor({6, 8}, std::move(v)), label, std::to_string(b)});
    }
    return out;
  };
  const ds::AbmilConfig paper;  // 50 epochs, lr 2e-5, batch 1
  const auto model = ds::train_abmil(bags(11), paper, 4);
  std::vector<bool> pos;
  std::vector<double> score;
  for (const auto& b : bags(12)) {
    pos.push_back(b.label == 1);
    score.push_back(ds::abmil_proba(model, b)[1]);
  }
  const double auc = metrics::binary_auc(pos, score);

  Tensor xr = test::random_tensor(rng, {40, 5});
  std::vector<double> yr;
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t g = 0; g < 3; ++g) {
      double v = 0.5 * static_cast<double>(g);
      for (std::size_t j = 0; j < 5; ++j) v += std::sin(static_cast<double>(g * 5 + j)) * xr.at(i, j);
      yr.push_back(v);
    }
  const Tensor ytrue({40, 3}, yr);
  const Tensor yp = ds::ridge_predict(ds::ridge_fit(xr, ytrue, 0.0), xr);
  double ridge_err = 0.0;
  for (std::size_t i = 0; i < yr.size(); ++i) ridge_err = std::max(ridge_err, std::abs(yp[i] - yr[i]));

  return {probe_acc == 1.0 && probe.iterations <= 1000 && auc >= 0.95 && paper.epochs == 50 && paper.lr == 2e-5 &&
              paper.batch == 1 && ridge_err <= 1e-9,
          fmt::format("probe acc {} in {} iters; abmil AUC {:.4f}; ridge max err {:.1e}", probe_acc, probe.iterations, auc,
                      ridge_err)};
}

// 7
Outcome metric_oracles() {
  Rng rng(7);
  double auc_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<metrics::PredictionRecord> recs;
    std::vector<bool> pos;
    std::vector<double> s;
    for (std::size_t i = 0; i < n; ++i) {
      const int label = i < 2 ? static_cast<int>(i) : static_cast<int>(rng.below(2));
      const double v = rng.bernoulli(0.3) ? static_cast<double>(rng.below(4)) / 3.0 : rng.uniform();
      recs.push_back({std::to_string(i), label, {1 - v, v}});
      pos.push_back(label == 1);
      s.push_back(v);
    }
    auc_err = std::max(auc_err, std::abs(metrics::roc_auc(recs) - test::pair_count_auc(pos, s)));
  }

  double ap_err = 0.0;
  std::size_t instances = 0;
  for (int trial = 0; trial < 3000; ++trial) {
    metrics::DetectionSet set;
    const std::size_t n_gt = 1 + rng.below(5), n_pred = rng.below(11 - n_gt);
    const auto box = [&] {
      const double x = rng.uniform(0, 20), y = rng.uniform(0, 20);
      return metrics::Box{x, y, x + rng.uniform(2, 10), y + rng.uniform(2, 10)};
    };
    for (std::size_t i = 0; i < n_gt; ++i) set.truth.push_back({rng.bernoulli(0.5) ? "a" : "b", static_cast<int>(rng.below(2)), box()});
    for (std::size_t i = 0; i < n_pred; ++i) {
      metrics::Detection d;
      if (rng.bernoulli(0.6)) {
        const auto& g = set.truth[rng.below(set.truth.size())];
        const double j = rng.uniform(0, 2.5);
        d = {g.image, g.cls, {g.box.x1 + j, g.box.y1, g.box.x2 + j, g.box.y2 + j / 2}, 0};
      } else {
        d = {rng.bernoulli(0.5) ? "a" : "b", static_cast<int>(rng.below(2)), box(), 0};
      }
      d.confidence = rng.bernoulli(0.5) ? static_cast<double>(rng.below(3)) / 2.0 : rng.uniform();
      set.predictions.push_back(d);
    }
    ap_err = std::max(ap_err, std::abs(metrics::mean_ap(set, 0.5) - test::sweep_map(set, 0.5)));
    ++instances;
  }

  const double wf1 = metrics::weighted_f1({0, 0, 0, 1}, {0, 0, 1, 1});
  const auto seg = metrics::segmentation_stats({0, 0, 1, 1}, {0, 0, 0, 1}, 2);
  return {auc_err <= 1e-12 && ap_err <= 1e-12 && std::abs(wf1 - 0.7667) <= 1e-4 && std::abs(seg.mpa - 5.0 / 6.0) <= 1e-15,
          fmt::format("auc err {:.1e}; mAP err {:.1e} over {} instances; wF1 {:.4f}; MPA {}", auc_err, ap_err, instances,
                      wf1, std::abs(seg.mpa - 5.0 / 6.0) <= 1e-15 ? "5/6" : fmt::format("{}", seg.mpa))};
}

// 8
Outcome pipeline_determinism() {
  const fs::path dir = fs::temp_directory_path() / "porc_acceptance_suite";
  fs::remove_all(dir);
  const auto run = [&](const char* sub) {
    const std::string cmd = fmt::format("\"{}\" run-suite --seed 7 --out \"{}\" 2>/dev/null", PORC_CLI, (dir / sub).string());
    return std::system(cmd.c_str());
  };
  const int rc1 = run("a"), rc2 = run("b");
  bool ok = rc1 == 0 && rc2 == 0;
  std::size_t files = 0, task_rows = 0;
  std::set<std::string> tasks;
  if (ok) {
    const auto a = io::read_file(dir / "a" / "summary.csv"), b = io::read_file(dir / "b" / "summary.csv");
    ok = a == b && !a.empty();
    for (const auto& e : fs::directory_iterator(dir / "a" / "results")) files += e.path().extension() == ".json";
    const std::string text(a.begin(), a.end());
    std::size_t pos = 0;
    while ((pos = text.find("\ntask,", pos)) != std::string::npos) {
      pos += 6;
      tasks.insert(text.substr(pos, text.find(',', pos) - pos));
      ++task_rows;
    }
  }
  const auto counts = harness::category_counts(harness::load_registry());
  const std::map<std::string, std::size_t> fig2 = {{"slide-preprocessing", 12}, {"pan-cancer", 3},
                                                    {"lesion-identification", 15}, {"cancer-subtyping", 36},
                                                    {"biomarker-evaluation", 36}, {"gene-expression", 10}};
  ok = ok && files == 112 && tasks.size() == 112 && counts == fig2;
  fs::remove_all(dir);
  return {ok, fmt::format("byte-identical summary.csv: {}; {} result files; {} tasks in summary; categories {}", ok ? "yes" : "no",
                          files, tasks.size(), counts == fig2 ? "12/3/15/36/36/10" : "mismatch")};
}

// 9
Outcome slide_store() {
  Rng rng(9);
  slide::RgbImage img(700, 515);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  const auto c = slide::SlideContainer::from_image(img, 128);
  const auto bytes = c.serialize();
  const bool round_trip = slide::SlideContainer::parse(bytes).serialize() == bytes && c.region(0, 0, 700, 515) == img;

  std::size_t pairs = 0, overlaps = 0;
  for (std::uint64_t s = 0; s < 8 && pairs < 10000; ++s) {
    slide::RgbImage canvas(2048, 1536, 255);
    canvas.fill_rect(static_cast<std::uint32_t>(rng.below(400)), static_cast<std::uint32_t>(rng.below(300)), 1400, 1000, 150, 60, 160);
    const auto sl = slide::SlideContainer::from_image(canvas, 128);
    const auto patches = slide::sample_patches(sl, slide::compute_tissue_mask(sl), 500, 64, s);
    for (std::size_t i = 0; i < patches.size(); ++i)
      for (std::size_t j = i + 1; j < patches.size() && pairs < 10000; ++j) {
        ++pairs;
        const auto &a = patches[i], &b = patches[j];
        overlaps += !(a.x + a.side <= b.x || b.x + b.side <= a.x || a.y + a.side <= b.y || b.y + b.side <= a.y);
      }
  }

  slide::RgbImage big(8192, 5120);
  big.fill_rect(0, 0, 8192, 5120, 150, 60, 160);
  const auto bs = slide::SlideContainer::from_image(big, 256);
  const auto n = slide::sample_patches(bs, slide::compute_tissue_mask(bs), 500, 256, 1).size();
  return {round_trip && pairs == 10000 && overlaps == 0 && n == 500,
          fmt::format("round-trip {}; {} pairs, {} overlaps; 8192x5120 -> {} patches", round_trip ? "exact" : "differs",
                      pairs, overlaps, n)};
}

// 10
Outcome report_composer() {
  const auto panels = report::default_panels();
  std::map<std::string, report::IhcStatus> preds;
  for (const auto& m : panels.panel_for("AITL"))
    if (m != "CD20" && m != "CXCL-13" && m != "CD10") preds[m] = report::IhcStatus::positive;
  const auto r = report::compose_lymphoma("Patient 1", "AITL", preds, panels);
  std::set<std::string> missing;
  for (const auto& [m, s] : r.ihc)
    if (s == report::IhcStatus::missing) missing.insert(m);
  const bool aitl = missing == std::set<std::string>{"CD20", "CXCL-13", "CD10"};

  Rng rng(10);
  std::size_t violations = 0, built = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto mal = rng.bernoulli(0.5) ? report::Malignancy::positive : report::Malignancy::negative;
    std::optional<report::Grade> g;
    std::optional<report::Polyp> p;
    if (rng.bernoulli(0.5)) g = static_cast<report::Grade>(rng.below(3));
    if (rng.bernoulli(0.5)) p = static_cast<report::Polyp>(rng.below(4));
    try {
      const auto c = report::compose_colorectal("P", mal, g, p);
      ++built;
      violations += c.grade().has_value() == c.polyp().has_value() ||
                    (c.malignancy() == report::Malignancy::positive) != c.grade().has_value();
    } catch (const data_error&) {
    }
  }
  return {aitl && violations == 0,
          fmt::format("AITL missing {{{}}}; fuzz 10000 cases, {} constructed, {} violations", fmt::join(missing, ", "), built,
                      violations)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"loss closed forms", loss_closed_forms},
      {"schedule endpoints and clipping", schedule_endpoints},
      {"EMA closed form", ema_closed_form},
      {"collapse sentinel", collapse_sentinel},
      {"downstream sanity", downstream_sanity},
      {"metric oracles", metric_oracles},
      {"pipeline determinism", pipeline_determinism},
      {"slide store", slide_store},
      {"report composer", report_composer},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s [%zu] %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
