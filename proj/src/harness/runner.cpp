// SPDX-License-Identifier: Apache-2.0
#include "porc/harness/runner.hpp"

#include <chrono>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "porc/downstream/abmil.hpp"
#include "porc/downstream/folds.hpp"
#include "porc/downstream/knn.hpp"
#include "porc/downstream/linear_probe.hpp"
#include "porc/downstream/ridge.hpp"
#include "porc/error.hpp"
#include "porc/harness/splits.hpp"
#include "porc/metrics/classification.hpp"
#include "porc/metrics/retrieval.hpp"
#include "porc/util/binary_io.hpp"
#include "porc/util/parallel.hpp"
#include "porc/util/random.hpp"

namespace porc::harness {

using nc::Tensor;
using nlohmann::json;

json to_json(const RunResult& r) {
  json m = json::object();
  for (const auto& [k, v] : r.metrics) m[k] = v;
  return {{"task_id", r.task_id},
          {"metrics", m},
          {"wall_seconds", r.wall_seconds},
          {"seed", r.seed},
          {"fixture_fingerprint", fmt::format("{:016x}", r.fingerprint)}};
}

Encoder default_encoder(std::uint64_t seed) {
  Encoder e;
  e.hyper = ssl::SslHyper::desk();
  e.hyper.seed = seed;
  e.state = ssl::SslState::init(e.hyper);
  return e;
}

Tensor standardize(const Tensor& x, const std::vector<std::size_t>& fit_rows) {
  if (fit_rows.empty()) throw data_error("standardize: no rows to fit");
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> mean(d, 0.0), sd(d, 0.0);
  for (std::size_t r : fit_rows)
    for (std::size_t c = 0; c < d; ++c) mean[c] += x.at(r, c);
  for (auto& m : mean) m /= static_cast<double>(fit_rows.size());
  for (std::size_t r : fit_rows)
    for (std::size_t c = 0; c < d; ++c) sd[c] += (x.at(r, c) - mean[c]) * (x.at(r, c) - mean[c]);
  for (auto& s : sd) s = std::sqrt(s / static_cast<double>(fit_rows.size()));
  std::vector<double> out(n * d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = (x.at(r, c) - mean[c]) / (sd[c] > 1e-12 ? sd[c] : 1.0);
  return Tensor({n, d}, std::move(out));
}

namespace {

Tensor take_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  out.reserve(rows.size() * x.cols());
  for (std::size_t r : rows) out.insert(out.end(), x.data().begin() + r * x.cols(), x.data().begin() + (r + 1) * x.cols());
  return Tensor({rows.size(), x.cols()}, std::move(out));
}

template <class T>
std::vector<T> take(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

std::vector<std::vector<std::size_t>> split_items(const TaskDescriptor& task, const std::vector<int>& labels,
                                                  const std::vector<std::string>& groups, std::uint64_t seed) {
  std::vector<SplitItem> items;
  for (std::size_t i = 0; i < labels.size(); ++i) items.push_back({labels[i], groups.empty() ? "" : groups[i]});
  return split_dataset(items, task.split, derive_seed(seed, 0x5017));
}

void put_classification(RunResult& r, const TaskDescriptor& task, const std::vector<metrics::PredictionRecord>& recs) {
  const json m = metrics::classification_metrics(recs, task.metrics);
  for (const auto& [k, v] : m.items()) r.metrics[k] = v.get<double>();
}

void run_linear_probe(RunResult& r, const TaskDescriptor& task, const RoiFixture& f, const Encoder& enc,
                      std::uint64_t seed) {
  const auto parts = split_items(task, f.labels, f.patients, seed);
  const Tensor feats = standardize(ssl::extract_features(enc.state, enc.hyper, f.images), parts.front());
  ds::ProbeConfig cfg;
  cfg.max_iters = task.train.max_iters;
  const auto probe = ds::train_linear_probe(take_rows(feats, parts.front()), take(f.labels, parts.front()), cfg, seed);
  const auto& test = parts.back();
  const Tensor proba = ds::probe_proba(probe, take_rows(feats, test));
  std::vector<metrics::PredictionRecord> recs;
  for (std::size_t k = 0; k < test.size(); ++k) {
    metrics::PredictionRecord rec;
    rec.id = f.patients[test[k]];
    rec.label = f.labels[test[k]];
    rec.scores.assign(proba.data().begin() + k * proba.cols(), proba.data().begin() + (k + 1) * proba.cols());
    recs.push_back(std::move(rec));
  }
  put_classification(r, task, recs);
}

void run_knn(RunResult& r, const TaskDescriptor& task, const RoiFixture& f, const Encoder& enc, std::uint64_t seed) {
  const auto parts = split_items(task, f.labels, f.patients, seed);
  const Tensor feats = ssl::extract_features(enc.state, enc.hyper, f.images);
  const auto& train = parts.front();
  const auto& test = parts.back();
  const ds::KnnIndex index(take_rows(feats, train), take(f.labels, train), take(f.patients, train));
  std::vector<metrics::RetrievalResult> results;
  for (std::size_t q : test) {
    metrics::RetrievalResult res;
    res.query_label = f.labels[q];
    for (const auto& n : ds::knn_query(index, feats.data().subspan(q * feats.cols(), feats.cols()), 5)) {
      res.neighbor_labels.push_back(n.label);
    }
    results.push_back(std::move(res));
  }
  for (const auto& m : task.metrics) {
    if (m == "mvacc@5") r.metrics[m] = metrics::majority_vote_acc(results, 5);
    else r.metrics[m] = metrics::retrieval_acc(results, static_cast<std::size_t>(std::stoi(m.substr(4))));
  }
}

void run_abmil(RunResult& r, const TaskDescriptor& task, const BagFixture& f, const Encoder& enc, std::uint64_t seed) {
  const auto parts = split_items(task, f.labels, f.ids, seed);
  std::vector<slide::RgbImage> all;
  std::vector<std::size_t> start;
  for (const auto& bag : f.bags) {
    start.push_back(all.size());
    all.insert(all.end(), bag.begin(), bag.end());
  }
  start.push_back(all.size());
  std::vector<std::size_t> fit_rows;
  for (std::size_t b : parts.front())
    for (std::size_t i = start[b]; i < start[b + 1]; ++i) fit_rows.push_back(i);
  const Tensor feats = standardize(ssl::extract_features(enc.state, enc.hyper, all), fit_rows);
  std::vector<ds::Bag> bags;
  for (std::size_t b = 0; b < f.bags.size(); ++b) {
    std::vector<std::size_t> rows(start[b + 1] - start[b]);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = start[b] + i;
    bags.push_back({take_rows(feats, rows), f.labels[b], f.ids[b]});
  }
  ds::AbmilConfig cfg;
  cfg.epochs = task.train.epochs;
  cfg.lr = task.train.lr;
  cfg.batch = task.train.batch;
  const auto model = ds::train_abmil(take(bags, parts.front()), cfg, seed);
  std::vector<metrics::PredictionRecord> recs;
  for (std::size_t b : parts.back()) {
    metrics::PredictionRecord rec;
    rec.id = f.ids[b];
    rec.label = f.labels[b];
    rec.scores = ds::abmil_proba(model, bags[b]);
    recs.push_back(std::move(rec));
  }
  put_classification(r, task, recs);
}

void run_ridge(RunResult& r, const GeneFixture& f, const Encoder& enc, const RunOptions& opt) {
  const Tensor raw = ssl::extract_features(enc.state, enc.hyper, f.images);
  const auto plan = ds::make_patient_folds(f.patients);
  const std::size_t G = f.expression.cols();
  std::vector<double> pred(f.expression.size());
  for (std::size_t k = 0; k < plan.held_out.size(); ++k) {
    const auto idx = ds::fold_indices(plan, k, f.patients);
    const Tensor feats = standardize(raw, idx.train);
    const auto model = ds::ridge_fit(take_rows(feats, idx.train), take_rows(f.expression, idx.train), opt.ridge_lambda);
    const Tensor p = ds::ridge_predict(model, take_rows(feats, idx.test));
    for (std::size_t i = 0; i < idx.test.size(); ++i)
      for (std::size_t g = 0; g < G; ++g) pred[idx.test[i] * G + g] = p.at(i, g);
  }
  r.metrics["pearson_mean"] = metrics::pearson_mean(Tensor(f.expression.shape(), std::move(pred)), f.expression);
}

void run_segmentation(RunResult& r, const SegmentationFixture& f) {
  std::vector<int> pred, truth;
  for (std::size_t i = 0; i < f.truth.size(); ++i) {
    truth.insert(truth.end(), f.truth[i].begin(), f.truth[i].end());
    pred.insert(pred.end(), f.pred[i].begin(), f.pred[i].end());
  }
  const auto s = metrics::segmentation_stats(pred, truth, f.classes);
  r.metrics["mpa"] = s.mpa;
  r.metrics["miou"] = s.miou;
  r.metrics["mean_dice"] = s.mean_dice;
}

}  // namespace

RunResult run_task(const TaskDescriptor& task, const Fixture& fixture, const Encoder& encoder, std::uint64_t seed,
                   const RunOptions& options) {
  const std::string want = fixture_kind(task.protocol);
  if (fixture.kind != want) {
    throw data_error(fmt::format("task {}: protocol {} needs a {} fixture, got {}", task.id, task.protocol, want, fixture.kind));
  }
  const auto t0 = std::chrono::steady_clock::now();
  RunResult r;
  r.task_id = task.id;
  r.seed = seed;
  r.fingerprint = fixture.fingerprint;
  if (task.protocol == "linear-probe") run_linear_probe(r, task, std::get<RoiFixture>(fixture.data), encoder, seed);
  else if (task.protocol == "knn") run_knn(r, task, std::get<RoiFixture>(fixture.data), encoder, seed);
  else if (task.protocol == "abmil") run_abmil(r, task, std::get<BagFixture>(fixture.data), encoder, seed);
  else if (task.protocol == "ridge") run_ridge(r, std::get<GeneFixture>(fixture.data), encoder, options);
  else if (task.protocol == "segmentation-metrics-only") run_segmentation(r, std::get<SegmentationFixture>(fixture.data));
  else r.metrics["map@0.5"] = metrics::mean_ap(std::get<DetectionFixture>(fixture.data).detections, 0.5);

  for (const auto& m : task.metrics) {
    if (!r.metrics.count(m)) throw data_error(fmt::format("task {}: metric {} was not produced", task.id, m));
  }
  std::erase_if(r.metrics, [&](const auto& kv) {
    return std::find(task.metrics.begin(), task.metrics.end(), kv.first) == task.metrics.end();
  });
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

Summary aggregate(const std::vector<RunResult>& results, const std::vector<TaskDescriptor>& registry) {
  if (results.empty()) throw data_error("aggregate: no results");
  Summary s;
  s.results = results;
  std::sort(s.results.begin(), s.results.end(), [](const auto& a, const auto& b) { return a.task_id < b.task_id; });
  std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> acc;
  std::set<int> seen;
  for (const auto& r : s.results) {
    if (!seen.insert(r.task_id).second) throw data_error(fmt::format("aggregate: duplicate result for task {}", r.task_id));
    const auto& task = find_task(registry, r.task_id);
    for (const auto& [k, v] : r.metrics) {
      auto& [sum, n] = acc[task.category][k];
      sum += v;
      ++n;
    }
  }
  for (const auto& [cat, ms] : acc)
    for (const auto& [k, sn] : ms) s.category_means[cat][k] = sn.first / static_cast<double>(sn.second);
  for (const auto& t : registry)
    if (!seen.count(t.id)) s.missing.push_back(t.id);
  return s;
}

std::string summary_csv(const Summary& s) {
  std::string out = "scope,key,metric,value\n";
  for (const auto& r : s.results)
    for (const auto& [k, v] : r.metrics) out += fmt::format("task,{},{},{:.17g}\n", r.task_id, k, v);
  for (const auto& cat : category_order()) {
    const auto it = s.category_means.find(cat);
    if (it == s.category_means.end()) continue;
    for (const auto& [k, v] : it->second) out += fmt::format("category,{},{},{:.17g}\n", cat, k, v);
  }
  return out;
}

json summary_json(const Summary& s) {
  json tasks = json::array();
  for (const auto& r : s.results) {
    json m = json::object();
    for (const auto& [k, v] : r.metrics) m[k] = v;
    tasks.push_back({{"task_id", r.task_id}, {"metrics", m}});
  }
  json cats = json::object();
  for (const auto& [cat, ms] : s.category_means) {
    json m = json::object();
    for (const auto& [k, v] : ms) m[k] = v;
    cats[cat] = m;
  }
  return {{"tasks", tasks}, {"categories", cats}, {"missing", s.missing}};
}

Summary run_suite(const std::vector<TaskDescriptor>& registry, const Encoder& encoder, const SuiteOptions& o) {
  std::vector<const TaskDescriptor*> todo;
  for (const auto& t : registry)
    if (o.only.empty() || std::find(o.only.begin(), o.only.end(), t.id) != o.only.end()) todo.push_back(&t);
  if (todo.empty()) throw data_error("run-suite: no tasks selected");
  std::vector<RunResult> results(todo.size());
  parallel_for(
      todo.size(),
      [&](std::size_t i) {
        const TaskDescriptor& t = *todo[i];
        const std::uint64_t seed = derive_seed(o.seed, static_cast<std::uint64_t>(t.id));
        const Fixture fx = make_fixture(t, seed, o.fixture);
        results[i] = run_task(t, fx, encoder, seed, o.run);
        spdlog::info("task {:3d} {:<28} done in {:.2f}s", t.id, t.protocol, results[i].wall_seconds);
      },
      std::max<std::size_t>(1, o.jobs));
  Summary s = aggregate(results, registry);
  if (!o.out_dir.empty()) {
    std::filesystem::create_directories(o.out_dir / "results");
    for (const auto& r : s.results) {
      io::write_text(o.out_dir / "results" / fmt::format("{}.json", r.task_id), to_json(r).dump(2) + "\n");
    }
    io::write_text(o.out_dir / "summary.csv", summary_csv(s));
    io::write_text(o.out_dir / "summary.json", summary_json(s).dump(2) + "\n");
  }
  return s;
}

}  // namespace porc::harness
