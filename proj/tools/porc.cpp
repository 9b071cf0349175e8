// SPDX-License-Identifier: Apache-2.0
// porc: ingest -> pretrain -> extract -> downstream -> evaluate -> report.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <iostream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "porc/downstream/abmil.hpp"
#include "porc/downstream/folds.hpp"
#include "porc/downstream/io.hpp"
#include "porc/downstream/knn.hpp"
#include "porc/downstream/linear_probe.hpp"
#include "porc/downstream/ridge.hpp"
#include "porc/error.hpp"
#include "porc/harness/runner.hpp"
#include "porc/metrics/classification.hpp"
#include "porc/metrics/retrieval.hpp"
#include "porc/report/report.hpp"
#include "porc/slide/container.hpp"
#include "porc/slide/tissue.hpp"
#include "porc/ssl/checkpoint.hpp"
#include "porc/util/binary_io.hpp"
#include "porc/util/parallel.hpp"
#include "porc/util/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  int verbosity = 0;
};

std::uint64_t resolve_seed(const Common& c) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("PORC_SEED"); env != nullptr && *env != '\0') {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception&) {
    }
    throw porc::data_error(fmt::format("PORC_SEED='{}' is not an unsigned integer", env));
  }
  return 0;
}

void log_run(const std::string& command, std::uint64_t seed, const json& config) {
  const std::string text = config.dump();
  spdlog::info("{}: seed={} config_hash={:016x}", command, seed, porc::fnv1a(text.data(), text.size()));
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw porc::data_error(fmt::format("{} '{}' does not exist", what, p.string()));
}

void prepare_output(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// Binary PPM (P6, maxval 255).
porc::slide::RgbImage read_ppm(const fs::path& path) {
  const auto bytes = porc::io::read_file(path);
  std::size_t pos = 0;
  const auto token = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
    return t;
  };
  if (token() != "P6") throw porc::data_error(path.string() + ": only binary PPM (P6) images are supported");
  std::uint32_t w = 0, h = 0, maxval = 0;
  try {
    w = static_cast<std::uint32_t>(std::stoul(token()));
    h = static_cast<std::uint32_t>(std::stoul(token()));
    maxval = static_cast<std::uint32_t>(std::stoul(token()));
  } catch (const std::exception&) {
    throw porc::data_error(path.string() + ": malformed PPM header");
  }
  if (maxval != 255) throw porc::data_error(path.string() + ": PPM maxval must be 255");
  ++pos;
  porc::slide::RgbImage img(w, h);
  if (bytes.size() - pos < img.pixels.size()) throw porc::data_error(path.string() + ": truncated PPM data");
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
            bytes.begin() + static_cast<std::ptrdiff_t>(pos + img.pixels.size()), img.pixels.begin());
  return img;
}

// Two tissue colors on a white background; used when no input image is given.
porc::slide::RgbImage synthetic_slide(std::uint32_t w, std::uint32_t h, std::uint64_t seed) {
  porc::Rng rng(seed);
  porc::slide::RgbImage img(w, h, 255);
  const std::uint32_t margin = std::min(w, h) / 8;
  for (std::uint32_t y = margin; y < h - margin; ++y)
    for (std::uint32_t x = margin; x < w - margin; ++x) {
      const bool left = x < w / 2;
      const auto n = [&] { return static_cast<int>(rng.normal(0.0, 8.0)); };
      const auto c = [](int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); };
      if (left) img.set(x, y, c(170 + n()), c(80 + n()), c(160 + n()));
      else img.set(x, y, c(220 + n()), c(140 + n()), c(180 + n()));
    }
  return img;
}

std::vector<porc::slide::RgbImage> synthetic_patches(std::size_t n, std::uint32_t side, std::uint64_t seed) {
  const auto slide = synthetic_slide(side * 8, side * 8, seed);
  porc::Rng rng(porc::derive_seed(seed, 2));
  std::vector<porc::slide::RgbImage> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t x = side + static_cast<std::uint32_t>(rng.below(side * 5));
    const std::uint32_t y = side + static_cast<std::uint32_t>(rng.below(side * 5));
    out.push_back(porc::slide::crop(slide, x, y, side, side));
  }
  return out;
}

std::vector<porc::slide::RgbImage> load_patches(const fs::path& slide_path, const fs::path& manifest) {
  require_file(slide_path, "slide");
  const auto slide = porc::slide::SlideContainer::read(slide_path);
  std::vector<porc::slide::PatchRef> refs;
  if (!manifest.empty()) {
    require_file(manifest, "manifest");
    for (const auto& e : porc::slide::manifest_from_jsonl(porc::io::read_text(manifest))) refs.push_back(e.patch);
  } else {
    refs = porc::slide::sample_patches(slide, porc::slide::compute_tissue_mask(slide));
  }
  std::vector<porc::slide::RgbImage> out;
  for (const auto& r : refs) out.push_back(slide.region(r.x, r.y, r.side, r.side));
  if (out.empty()) throw porc::data_error("no patches: the slide has no tissue");
  return out;
}

porc::ssl::SslHyper load_hyper(const fs::path& config, const std::vector<std::string>& overrides, std::uint64_t seed) {
  porc::ssl::SslHyper h = porc::ssl::SslHyper::desk();
  if (!config.empty()) {
    require_file(config, "config");
    try {
      h = porc::ssl::hyper_from_json(json::parse(porc::io::read_text(config)));
    } catch (const json::parse_error& e) {
      throw porc::data_error(config.string() + ": " + e.what());
    }
  }
  h.seed = seed;
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw porc::data_error("override '" + kv + "' must look like key=value");
    porc::ssl::apply_override(h, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return h;
}

porc::harness::Encoder load_encoder(const fs::path& checkpoint, std::uint64_t seed) {
  if (checkpoint.empty()) return porc::harness::default_encoder(seed);
  require_file(checkpoint, "checkpoint");
  auto ck = porc::ssl::load_checkpoint(checkpoint);
  return {ck.hyper, std::move(ck.state)};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

porc::metrics::PredictionRecord to_record(const porc::ds::PredictionRow& r) {
  porc::metrics::PredictionRecord rec;
  rec.id = r.id;
  rec.label = r.true_label;
  rec.scores = r.scores;
  return rec;
}

void write_json(const fs::path& out, const json& j) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  prepare_output(out);
  porc::io::write_text(out, j.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("porc"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"porc: slide ingestion, self-supervised pretraining, downstream evaluation and reports"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--seed", common.seed, "Random seed (falls back to PORC_SEED, then 0)");
  app.add_flag("-v,--verbose", common.verbosity, "More logging (repeatable)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Tile an image into a slide container and sample tissue patches");
  fs::path ingest_image, ingest_out, ingest_manifest;
  std::string ingest_synthetic;
  std::uint32_t ingest_tile = 256, ingest_side = 256;
  std::size_t ingest_cap = 500;
  bool ingest_downsample = false;
  ingest->add_option("--image", ingest_image, "Binary PPM (P6) input image");
  ingest->add_option("--synthetic", ingest_synthetic, "Generate a WxH synthetic slide instead of reading an image");
  ingest->add_option("--out", ingest_out, "Output container path")->required();
  ingest->add_option("--manifest", ingest_manifest, "Output patch manifest (JSON lines)");
  ingest->add_option("--tile-size", ingest_tile, "Tile size: 64, 128, 256 or 512");
  ingest->add_option("--side", ingest_side, "Patch side in pixels");
  ingest->add_option("--cap", ingest_cap, "Maximum patches per slide");
  ingest->add_flag("--downsample", ingest_downsample, "Store the 2x downsampled (10x) slide");

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "Self-supervised pretraining; writes a checkpoint");
  fs::path pt_slide, pt_manifest, pt_config, pt_out, pt_resume, pt_log;
  std::int64_t pt_steps = 0, pt_batch = 0;
  std::vector<std::string> pt_set;
  pretrain->add_option("--slide", pt_slide, "Slide container supplying patches (synthetic patches if omitted)");
  pretrain->add_option("--manifest", pt_manifest, "Patch manifest for --slide");
  pretrain->add_option("--config", pt_config, "Hyperparameter JSON");
  pretrain->add_option("--set", pt_set, "Dotted-key override, e.g. crops.global_size=32");
  pretrain->add_option("--steps", pt_steps, "Number of steps (default: all scheduled steps)");
  pretrain->add_option("--batch", pt_batch, "Images per step (default: config batch_size)");
  pretrain->add_option("--resume", pt_resume, "Continue from a checkpoint");
  pretrain->add_option("--out", pt_out, "Checkpoint path")->required();
  pretrain->add_option("--log", pt_log, "Per-step metrics as JSON lines");

  // extract
  auto* extract = app.add_subcommand("extract", "Teacher features for patches");
  fs::path ex_ckpt, ex_slide, ex_manifest, ex_out;
  extract->add_option("--checkpoint", ex_ckpt, "Checkpoint (a fresh seeded encoder if omitted)");
  extract->add_option("--slide", ex_slide, "Slide container")->required();
  extract->add_option("--manifest", ex_manifest, "Patch manifest");
  extract->add_option("--out", ex_out, "Feature file (FEAT)")->required();

  // probe
  auto* probe = app.add_subcommand("probe", "Linear probe on labeled feature tables");
  fs::path pr_train, pr_test, pr_out, pr_metrics;
  std::int64_t pr_iters = 1000;
  double pr_lr = 0.1;
  probe->add_option("--train", pr_train, "Training table (id,label,patient,f_0,...)")->required();
  probe->add_option("--test", pr_test, "Test table")->required();
  probe->add_option("--max-iters", pr_iters, "Iteration cap (<= 1000)");
  probe->add_option("--lr", pr_lr, "Gradient descent step size");
  probe->add_option("--out", pr_out, "Predictions CSV")->required();
  probe->add_option("--metrics-out", pr_metrics, "Metrics JSON (stdout if omitted)");

  // mil
  auto* mil = app.add_subcommand("mil", "Attention MIL on instance tables grouped into bags by the patient column");
  fs::path mil_train, mil_test, mil_out, mil_metrics;
  porc::ds::AbmilConfig mil_cfg;
  mil->add_option("--train", mil_train, "Training instances (id,label,patient=bag,f_0,...)")->required();
  mil->add_option("--test", mil_test, "Test instances")->required();
  mil->add_option("--epochs", mil_cfg.epochs, "Epochs");
  mil->add_option("--lr", mil_cfg.lr, "Adam learning rate");
  mil->add_option("--batch", mil_cfg.batch, "Bags per step");
  mil->add_option("--hidden", mil_cfg.hidden, "Attention hidden size");
  mil->add_option("--out", mil_out, "Predictions CSV")->required();
  mil->add_option("--metrics-out", mil_metrics, "Metrics JSON (stdout if omitted)");

  // knn
  auto* knn = app.add_subcommand("knn", "Nearest-neighbor retrieval");
  fs::path knn_index, knn_queries, knn_out, knn_metrics;
  std::size_t knn_k = 5;
  knn->add_option("--index", knn_index, "Indexed table")->required();
  knn->add_option("--queries", knn_queries, "Query table")->required();
  knn->add_option("--k", knn_k, "Neighbors per query (>= 5 for MVAcc@5)");
  knn->add_option("--out", knn_out, "Retrieval CSV")->required();
  knn->add_option("--metrics-out", knn_metrics, "Metrics JSON (stdout if omitted)");

  // genes
  auto* genes = app.add_subcommand("genes", "Ridge gene-expression regression, leave-one-patient-out");
  fs::path gn_features, gn_targets, gn_out;
  double gn_lambda = 1.0;
  genes->add_option("--features", gn_features, "Feature table (label column ignored)")->required();
  genes->add_option("--targets", gn_targets, "Target table (id,label,patient,g_0,...)")->required();
  genes->add_option("--lambda", gn_lambda, "Ridge penalty");
  genes->add_option("--out", gn_out, "Metrics JSON (stdout if omitted)");

  // metrics
  auto* metrics_cmd = app.add_subcommand("metrics", "Classification metrics from a predictions CSV");
  fs::path mt_pred, mt_out;
  std::string mt_names = "accuracy,balanced_accuracy,weighted_f1,auc";
  metrics_cmd->add_option("--pred", mt_pred, "Predictions CSV (id,true_label,score_0,...)")->required();
  metrics_cmd->add_option("--metrics", mt_names, "Comma-separated metric names");
  metrics_cmd->add_option("--out", mt_out, "Metrics JSON (stdout if omitted)");

  // run-task / run-suite
  auto* run_task = app.add_subcommand("run-task", "Run one registry task on its synthetic fixture");
  auto* run_suite = app.add_subcommand("run-suite", "Run every registry task and aggregate");
  int rt_task = 0;
  fs::path run_out, run_ckpt, run_registry;
  std::size_t run_jobs = porc::default_workers();
  bool run_perfect = false;
  run_task->add_option("--task", rt_task, "Task id (1-112)")->required();
  for (auto* sc : {run_task, run_suite}) {
    sc->add_option("--out", run_out, "Output directory")->required();
    sc->add_option("--checkpoint", run_ckpt, "Encoder checkpoint (a fresh seeded encoder if omitted)");
    sc->add_option("--registry", run_registry, "Registry JSON (shipped registry if omitted)");
    sc->add_flag("--perfect", run_perfect, "Metrics-only fixtures carry exact predictions");
  }
  run_suite->add_option("--jobs", run_jobs, "Worker threads");

  // report
  auto* report = app.add_subcommand("report", "Compose structured reports from subtask predictions");
  fs::path rp_input, rp_out, rp_panels, rp_truth, rp_agreement;
  report->add_option("--input", rp_input, "JSON array of per-patient predictions")->required();
  report->add_option("--out", rp_out, "Reports JSON")->required();
  report->add_option("--panels", rp_panels, "Panel JSON (shipped panels if omitted)");
  report->add_option("--truth", rp_truth, "Pathologist lymphoma reports for agreement scoring");
  report->add_option("--agreement", rp_agreement, "Agreement CSV output (requires --truth)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  if (common.verbosity >= 2) spdlog::set_level(spdlog::level::debug);
  else if (common.verbosity == 1) spdlog::set_level(spdlog::level::info);
  else spdlog::set_level(spdlog::level::info);

  try {
    const std::uint64_t seed = resolve_seed(common);

    if (*ingest) {
      if (ingest_image.empty() == ingest_synthetic.empty()) throw porc::data_error("ingest: give exactly one of --image or --synthetic");
      porc::slide::RgbImage img;
      if (!ingest_image.empty()) {
        require_file(ingest_image, "image");
        img = read_ppm(ingest_image);
      } else {
        std::uint32_t w = 0, h = 0;
        if (std::sscanf(ingest_synthetic.c_str(), "%ux%u", &w, &h) != 2 || w < 16 || h < 16) {
          throw porc::data_error("ingest: --synthetic expects WxH with both >= 16");
        }
        img = synthetic_slide(w, h, seed);
      }
      log_run("ingest", seed, {{"tile", ingest_tile}, {"side", ingest_side}, {"cap", ingest_cap}, {"downsample", ingest_downsample}});
      auto slide = porc::slide::SlideContainer::from_image(img, ingest_tile, ingest_out.stem().string());
      if (ingest_downsample) slide = porc::slide::downsample_2x(slide);
      prepare_output(ingest_out);
      slide.write(ingest_out);
      if (!ingest_manifest.empty()) {
        const auto mask = porc::slide::compute_tissue_mask(slide);
        const auto refs = porc::slide::sample_patches(slide, mask, ingest_cap, ingest_side, seed);
        std::vector<porc::slide::ManifestEntry> entries;
        for (std::size_t i = 0; i < refs.size(); ++i) entries.push_back({fmt::format("{}_{:04d}", slide.id(), i), refs[i], {}});
        prepare_output(ingest_manifest);
        porc::io::write_text(ingest_manifest, porc::slide::manifest_to_jsonl(entries));
        spdlog::info("ingest: {} tissue tiles of {}, {} patches", mask.count(), slide.tile_count(), refs.size());
      }
      return 0;
    }

    if (*pretrain) {
      porc::ssl::SslHyper h;
      porc::ssl::SslState state;
      if (!pt_resume.empty()) {
        require_file(pt_resume, "checkpoint");
        auto ck = porc::ssl::load_checkpoint(pt_resume);
        h = ck.hyper;
        state = std::move(ck.state);
      } else {
        h = load_hyper(pt_config, pt_set, seed);
        state = porc::ssl::SslState::init(h);
      }
      const auto patches = pt_slide.empty() ? synthetic_patches(64, 64, seed) : load_patches(pt_slide, pt_manifest);
      const std::int64_t steps = pt_steps > 0 ? pt_steps : h.total_steps() - state.step;
      const std::int64_t batch = pt_batch > 0 ? pt_batch : h.batch_size;
      log_run("pretrain", h.seed, porc::ssl::to_json(h));
      const auto log = porc::ssl::pretrain(state, patches, h, steps, batch);
      if (!log.empty()) {
        spdlog::info("pretrain: {} steps, loss {:.5f} -> {:.5f}", log.size(), log.front().total_loss, log.back().total_loss);
      }
      prepare_output(pt_out);
      porc::ssl::save_checkpoint(pt_out, h, state);
      if (!pt_log.empty()) {
        std::string lines;
        for (const auto& m : log) {
          lines += json{{"step", m.step}, {"total", m.total_loss}, {"dino", m.dino_loss}, {"ibot", m.ibot_loss},
                        {"koleo", m.koleo_loss}, {"grad_norm", m.grad_norm}, {"lr", m.lr}, {"teacher_temp", m.teacher_temp},
                        {"momentum", m.momentum}, {"weight_decay", m.weight_decay}, {"teacher_entropy", m.teacher_entropy}}
                       .dump() + "\n";
        }
        prepare_output(pt_log);
        porc::io::write_text(pt_log, lines);
      }
      return 0;
    }

    if (*extract) {
      const auto enc = load_encoder(ex_ckpt, seed);
      const auto patches = load_patches(ex_slide, ex_manifest);
      log_run("extract", seed, porc::ssl::to_json(enc.hyper));
      prepare_output(ex_out);
      porc::ssl::save_features(ex_out, porc::ssl::extract_features(enc.state, enc.hyper, patches));
      return 0;
    }

    if (*probe) {
      require_file(pr_train, "training table");
      require_file(pr_test, "test table");
      log_run("probe", seed, {{"max_iters", pr_iters}, {"lr", pr_lr}});
      const auto train = porc::ds::read_labeled_features(pr_train);
      const auto test = porc::ds::read_labeled_features(pr_test);
      porc::ds::ProbeConfig cfg;
      cfg.max_iters = pr_iters;
      cfg.lr = pr_lr;
      const auto model = porc::ds::train_linear_probe(train.features, train.labels, cfg, seed);
      const auto proba = porc::ds::probe_proba(model, test.features);
      std::vector<porc::ds::PredictionRow> rows;
      std::vector<porc::metrics::PredictionRecord> recs;
      for (std::size_t i = 0; i < test.ids.size(); ++i) {
        porc::ds::PredictionRow r{test.ids[i], test.labels[i],
                                  {proba.data().begin() + i * proba.cols(), proba.data().begin() + (i + 1) * proba.cols()}};
        recs.push_back(to_record(r));
        rows.push_back(std::move(r));
      }
      prepare_output(pr_out);
      porc::ds::write_predictions(pr_out, rows);
      write_json(pr_metrics, porc::metrics::classification_metrics(recs, {"accuracy", "balanced_accuracy", "weighted_f1", "auc"}));
      return 0;
    }

    if (*mil) {
      require_file(mil_train, "training table");
      require_file(mil_test, "test table");
      log_run("mil", seed, {{"epochs", mil_cfg.epochs}, {"lr", mil_cfg.lr}, {"batch", mil_cfg.batch}, {"hidden", mil_cfg.hidden}});
      const auto to_bags = [](const porc::ds::LabeledFeatures& t) {
        std::map<std::string, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < t.ids.size(); ++i) groups[t.groups[i]].push_back(i);
        std::vector<porc::ds::Bag> bags;
        for (const auto& [id, rows] : groups) {
          std::vector<double> data;
          for (std::size_t r : rows) {
            if (t.labels[r] != t.labels[rows.front()]) throw porc::data_error("mil: bag '" + id + "' mixes labels");
            data.insert(data.end(), t.features.data().begin() + r * t.features.cols(),
                        t.features.data().begin() + (r + 1) * t.features.cols());
          }
          bags.push_back({porc::nc::Tensor({rows.size(), t.features.cols()}, std::move(data)), t.labels[rows.front()], id});
        }
        return bags;
      };
      const auto train = to_bags(porc::ds::read_labeled_features(mil_train));
      const auto test = to_bags(porc::ds::read_labeled_features(mil_test));
      const auto model = porc::ds::train_abmil(train, mil_cfg, seed);
      std::vector<porc::ds::PredictionRow> rows;
      std::vector<porc::metrics::PredictionRecord> recs;
      for (const auto& b : test) {
        porc::ds::PredictionRow r{b.id, b.label, porc::ds::abmil_proba(model, b)};
        recs.push_back(to_record(r));
        rows.push_back(std::move(r));
      }
      prepare_output(mil_out);
      porc::ds::write_predictions(mil_out, rows);
      write_json(mil_metrics, porc::metrics::classification_metrics(recs, {"accuracy", "balanced_accuracy", "weighted_f1", "auc"}));
      return 0;
    }

    if (*knn) {
      require_file(knn_index, "index table");
      require_file(knn_queries, "query table");
      log_run("knn", seed, {{"k", knn_k}});
      const auto idx = porc::ds::read_labeled_features(knn_index);
      const auto q = porc::ds::read_labeled_features(knn_queries);
      const porc::ds::KnnIndex index(idx.features, idx.labels, idx.ids);
      std::vector<porc::ds::RetrievalRow> rows;
      std::vector<porc::metrics::RetrievalResult> results;
      for (std::size_t i = 0; i < q.ids.size(); ++i) {
        porc::metrics::RetrievalResult res{q.labels[i], {}};
        const auto nn = porc::ds::knn_query(index, q.features.data().subspan(i * q.features.cols(), q.features.cols()), knn_k);
        for (std::size_t r = 0; r < nn.size(); ++r) {
          rows.push_back({q.ids[i], r + 1, index.id(nn[r].index), nn[r].label, nn[r].distance});
          res.neighbor_labels.push_back(nn[r].label);
        }
        results.push_back(std::move(res));
      }
      prepare_output(knn_out);
      porc::ds::write_retrieval(knn_out, rows);
      json m = json::object();
      for (std::size_t k : {1, 3, 5})
        if (k <= knn_k) m[fmt::format("acc@{}", k)] = porc::metrics::retrieval_acc(results, k);
      if (knn_k >= 5) m["mvacc@5"] = porc::metrics::majority_vote_acc(results, 5);
      write_json(knn_metrics, m);
      return 0;
    }

    if (*genes) {
      require_file(gn_features, "feature table");
      require_file(gn_targets, "target table");
      log_run("genes", seed, {{"lambda", gn_lambda}});
      const auto x = porc::ds::read_labeled_features(gn_features);
      const auto y = porc::ds::read_labeled_features(gn_targets);
      if (x.ids != y.ids) throw porc::data_error("genes: feature and target tables list different ids");
      const auto plan = porc::ds::make_patient_folds(x.groups);
      const std::size_t G = y.features.cols();
      std::vector<double> pred(y.features.size());
      for (std::size_t k = 0; k < plan.held_out.size(); ++k) {
        const auto fi = porc::ds::fold_indices(plan, k, x.groups);
        const auto rows = [](const porc::nc::Tensor& t, const std::vector<std::size_t>& idx) {
          std::vector<double> d;
          for (std::size_t r : idx) d.insert(d.end(), t.data().begin() + r * t.cols(), t.data().begin() + (r + 1) * t.cols());
          return porc::nc::Tensor({idx.size(), t.cols()}, std::move(d));
        };
        const porc::nc::Tensor xs = porc::harness::standardize(x.features, fi.train);
        const auto model = porc::ds::ridge_fit(rows(xs, fi.train), rows(y.features, fi.train), gn_lambda);
        const auto p = porc::ds::ridge_predict(model, rows(xs, fi.test));
        for (std::size_t i = 0; i < fi.test.size(); ++i)
          for (std::size_t g = 0; g < G; ++g) pred[fi.test[i] * G + g] = p.at(i, g);
      }
      write_json(gn_out, {{"pearson_mean", porc::metrics::pearson_mean(porc::nc::Tensor(y.features.shape(), std::move(pred)), y.features)},
                          {"folds", plan.held_out.size()}});
      return 0;
    }

    if (*metrics_cmd) {
      require_file(mt_pred, "predictions");
      std::vector<porc::metrics::PredictionRecord> recs;
      for (const auto& r : porc::ds::read_predictions(mt_pred)) recs.push_back(to_record(r));
      write_json(mt_out, porc::metrics::classification_metrics(recs, split_list(mt_names)));
      return 0;
    }

    if (*run_task || *run_suite) {
      const auto registry = run_registry.empty() ? porc::harness::load_registry() : porc::harness::load_registry(run_registry);
      const auto enc = load_encoder(run_ckpt, seed);
      porc::harness::SuiteOptions opt;
      opt.seed = seed;
      opt.out_dir = run_out;
      opt.jobs = *run_suite ? run_jobs : 1;
      opt.fixture.perfect = run_perfect;
      if (*run_task) {
        porc::harness::find_task(registry, rt_task);
        opt.only = {rt_task};
      }
      log_run(*run_task ? "run-task" : "run-suite", seed, porc::ssl::to_json(enc.hyper));
      auto s = porc::harness::run_suite(registry, enc, opt);
      if (*run_task) std::cout << porc::harness::to_json(s.results.front()).dump(2) << "\n";
      else spdlog::info("run-suite: {} tasks, {} missing", s.results.size(), s.missing.size());
      return 0;
    }

    if (*report) {
      require_file(rp_input, "input");
      const auto panels = rp_panels.empty() ? porc::report::default_panels() : porc::report::load_panels(rp_panels);
      json input;
      try {
        input = json::parse(porc::io::read_text(rp_input));
      } catch (const json::parse_error& e) {
        throw porc::data_error(rp_input.string() + ": " + e.what());
      }
      if (!input.is_array()) throw porc::data_error("report: input must be a JSON array");
      json out = json::array();
      std::vector<porc::report::LymphomaReport> lymphoma;
      for (const auto& p : input) {
        try {
          const std::string disease = p.at("disease");
          const std::string patient = p.at("patient");
          if (disease == "lymphoma") {
            std::map<std::string, porc::report::IhcStatus> ihc;
            if (p.contains("ihc"))
              for (const auto& [m, s] : p.at("ihc").items()) ihc[m] = porc::report::ihc_from_string(s.get<std::string>());
            lymphoma.push_back(porc::report::compose_lymphoma(patient, p.at("subtype"), ihc, panels));
            out.push_back(porc::report::to_json(lymphoma.back()));
          } else if (disease == "colorectal") {
            std::optional<porc::report::Grade> grade;
            std::optional<porc::report::Polyp> polyp;
            if (p.contains("grade")) grade = porc::report::grade_from_string(p.at("grade"));
            if (p.contains("polyp")) polyp = porc::report::polyp_from_string(p.at("polyp"));
            out.push_back(porc::report::to_json(
                porc::report::compose_colorectal(patient, porc::report::malignancy_from_string(p.at("malignancy")), grade, polyp)));
          } else {
            throw porc::data_error("report: unknown disease '" + disease + "'");
          }
        } catch (const json::exception& e) {
          throw porc::data_error(std::string("report: ") + e.what());
        }
      }
      prepare_output(rp_out);
      porc::io::write_text(rp_out, porc::report::canonical(out));
      if (!rp_truth.empty()) {
        require_file(rp_truth, "truth");
        std::vector<porc::report::LymphomaReport> truth;
        for (const auto& t : json::parse(porc::io::read_text(rp_truth))) truth.push_back(porc::report::lymphoma_from_json(t));
        const auto m = porc::report::agreement(lymphoma, truth);
        spdlog::info("agreement: {} agree, {} disagree, {} missing, rate {}", m.agree, m.disagree, m.missing, m.rate_text());
        if (!rp_agreement.empty()) {
          prepare_output(rp_agreement);
          porc::io::write_text(rp_agreement, porc::report::agreement_csv(m));
        }
      }
      return 0;
    }
  } catch (const porc::numeric_error& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const porc::data_error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 1;
}
