// SPDX-License-Identifier: Apache-2.0
#include "porc/ssl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <spdlog/spdlog.h>

#include "porc/error.hpp"
#include "porc/ssl/losses.hpp"
#include "porc/util/random.hpp"

namespace porc::ssl {

using nc::Tensor;
using nc::Var;
using nlohmann::json;

SslHyper SslHyper::desk() {
  SslHyper h;
  h.crops.global_size = 32;
  h.crops.local_size = 16;
  h.crops.min_source = 32;
  h.epochs = 20;
  h.steps_per_epoch = 10;
  h.batch_size = 4;
  return h;
}

nc::Schedule SslHyper::lr_schedule() const {
  return nc::Schedule::warmup_cosine(lr_start, lr_peak, lr_final, warmup_epochs * steps_per_epoch, total_steps());
}

nc::Schedule SslHyper::teacher_temp_schedule() const {
  return nc::Schedule::cosine(teacher_temp_start, teacher_temp_final, warmup_teacher_temp_epochs * steps_per_epoch);
}

nc::Schedule SslHyper::momentum_schedule() const {
  return nc::Schedule::cosine(momentum_start, momentum_final, total_steps());
}

nc::Schedule SslHyper::weight_decay_schedule() const {
  return nc::Schedule::cosine(weight_decay_start, weight_decay_final, total_steps());
}

void SslHyper::validate() const {
  auto fail = [](const std::string& m) { throw data_error("ssl hyper: " + m); };
  if (mask_ratio.first > mask_ratio.second) fail("min masking ratio exceeds max");
  if (mask_ratio.first < 0.0 || mask_ratio.second > 1.0) fail("masking ratios must lie in [0, 1]");
  if (epochs < 1 || steps_per_epoch < 1) fail("epochs and steps_per_epoch must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs > epochs) fail("warmup epochs must be within [0, epochs]");
  if (warmup_teacher_temp_epochs < 0) fail("teacher temperature warmup must be >= 0");
  if (lambda_dino < 0 || lambda_ibot < 0 || lambda_koleo < 0) fail("loss weights must be >= 0");
  for (double v : {lr_start, lr_peak, lr_final, teacher_temp_start, teacher_temp_final, student_temp, momentum_start,
                   momentum_final, weight_decay_start, weight_decay_final, clip_norm, center_momentum}) {
    if (!std::isfinite(v)) fail("schedule endpoints must be finite");
  }
  if (teacher_temp_start <= 0 || teacher_temp_final <= 0 || student_temp <= 0) fail("temperatures must be positive");
  if (clip_norm <= 0) fail("clip norm must be positive");
  if (center_momentum < 0 || center_momentum >= 1) fail("center momentum must be in [0, 1)");
  if (crops.global_count < 1) fail("need at least one global crop");
  if (crops.global_count + crops.local_count < 2) fail("need at least two views per image");
}

json to_json(const SslHyper& h) {
  const auto pair = [](const std::pair<double, double>& p) { return json::array({p.first, p.second}); };
  json j;
  j["encoder"] = {{"grid", h.encoder.grid},
                  {"pool", h.encoder.pool},
                  {"embed_dim", h.encoder.embed_dim},
                  {"depth", h.encoder.depth},
                  {"mlp_hidden", h.encoder.mlp_hidden}};
  j["head"] = {{"hidden", h.head.hidden}, {"bottleneck", h.head.bottleneck}, {"prototypes", h.head.prototypes}};
  const auto& c = h.crops;
  j["crops"] = {{"global_count", c.global_count},
                {"global_size", c.global_size},
                {"global_scale", pair(c.global_scale)},
                {"local_count", c.local_count},
                {"local_size", c.local_size},
                {"local_scale", pair(c.local_scale)},
                {"aspect_ratio", pair(c.aspect_ratio)},
                {"hflip_p", c.hflip_p},
                {"jitter_p", c.jitter_p},
                {"jitter_strength", c.jitter_strength},
                {"grayscale_p", c.grayscale_p},
                {"blur_p_first_global", c.blur_p_first_global},
                {"blur_p_other", c.blur_p_other},
                {"blur_sigma", pair(c.blur_sigma)},
                {"min_source", c.min_source}};
  j["mask_ratio"] = pair(h.mask_ratio);
  j["epochs"] = h.epochs;
  j["warmup_epochs"] = h.warmup_epochs;
  j["freeze_last_layer_epochs"] = h.freeze_last_layer_epochs;
  j["warmup_teacher_temp_epochs"] = h.warmup_teacher_temp_epochs;
  j["steps_per_epoch"] = h.steps_per_epoch;
  j["batch_size"] = h.batch_size;
  j["lr"] = {{"start", h.lr_start}, {"peak", h.lr_peak}, {"final", h.lr_final}};
  j["teacher_temp"] = {{"start", h.teacher_temp_start}, {"final", h.teacher_temp_final}};
  j["student_temp"] = h.student_temp;
  j["momentum"] = {{"start", h.momentum_start}, {"final", h.momentum_final}};
  j["weight_decay"] = {{"start", h.weight_decay_start}, {"final", h.weight_decay_final}};
  j["clip_norm"] = h.clip_norm;
  j["adamw"] = {{"beta1", h.adamw.beta1}, {"beta2", h.adamw.beta2}, {"eps", h.adamw.eps}};
  j["lambda"] = {{"dino", h.lambda_dino}, {"ibot", h.lambda_ibot}, {"koleo", h.lambda_koleo}};
  j["centering"] = h.centering;
  j["center_momentum"] = h.center_momentum;
  j["seed"] = h.seed;
  return j;
}

SslHyper hyper_from_json(const json& j) {
  const auto pair = [](const json& a) { return std::pair<double, double>{a.at(0).get<double>(), a.at(1).get<double>()}; };
  try {
    SslHyper h;
    const auto& e = j.at("encoder");
    h.encoder.grid = e.at("grid");
    h.encoder.pool = e.at("pool");
    h.encoder.embed_dim = e.at("embed_dim");
    h.encoder.depth = e.at("depth");
    h.encoder.mlp_hidden = e.at("mlp_hidden");
    const auto& hd = j.at("head");
    h.head.hidden = hd.at("hidden");
    h.head.bottleneck = hd.at("bottleneck");
    h.head.prototypes = hd.at("prototypes");
    const auto& c = j.at("crops");
    h.crops.global_count = c.at("global_count");
    h.crops.global_size = c.at("global_size");
    h.crops.global_scale = pair(c.at("global_scale"));
    h.crops.local_count = c.at("local_count");
    h.crops.local_size = c.at("local_size");
    h.crops.local_scale = pair(c.at("local_scale"));
    h.crops.aspect_ratio = pair(c.at("aspect_ratio"));
    h.crops.hflip_p = c.at("hflip_p");
    h.crops.jitter_p = c.at("jitter_p");
    h.crops.jitter_strength = c.at("jitter_strength");
    h.crops.grayscale_p = c.at("grayscale_p");
    h.crops.blur_p_first_global = c.at("blur_p_first_global");
    h.crops.blur_p_other = c.at("blur_p_other");
    h.crops.blur_sigma = pair(c.at("blur_sigma"));
    h.crops.min_source = c.at("min_source");
    h.mask_ratio = pair(j.at("mask_ratio"));
    h.epochs = j.at("epochs");
    h.warmup_epochs = j.at("warmup_epochs");
    h.freeze_last_layer_epochs = j.at("freeze_last_layer_epochs");
    h.warmup_teacher_temp_epochs = j.at("warmup_teacher_temp_epochs");
    h.steps_per_epoch = j.at("steps_per_epoch");
    h.batch_size = j.at("batch_size");
    h.lr_start = j.at("lr").at("start");
    h.lr_peak = j.at("lr").at("peak");
    h.lr_final = j.at("lr").at("final");
    h.teacher_temp_start = j.at("teacher_temp").at("start");
    h.teacher_temp_final = j.at("teacher_temp").at("final");
    h.student_temp = j.at("student_temp");
    h.momentum_start = j.at("momentum").at("start");
    h.momentum_final = j.at("momentum").at("final");
    h.weight_decay_start = j.at("weight_decay").at("start");
    h.weight_decay_final = j.at("weight_decay").at("final");
    h.clip_norm = j.at("clip_norm");
    h.adamw.beta1 = j.at("adamw").at("beta1");
    h.adamw.beta2 = j.at("adamw").at("beta2");
    h.adamw.eps = j.at("adamw").at("eps");
    h.lambda_dino = j.at("lambda").at("dino");
    h.lambda_ibot = j.at("lambda").at("ibot");
    h.lambda_koleo = j.at("lambda").at("koleo");
    h.centering = j.at("centering");
    h.center_momentum = j.at("center_momentum");
    h.seed = j.at("seed");
    h.validate();
    return h;
  } catch (const json::exception& ex) {
    throw data_error(std::string("ssl hyper: ") + ex.what());
  }
}

void apply_override(SslHyper& h, const std::string& key, const std::string& value) {
  json j = to_json(h);
  json* node = &j;
  std::istringstream parts(key);
  std::string part;
  while (std::getline(parts, part, '.')) {
    if (!node->is_object() || !node->contains(part)) throw data_error("unknown hyperparameter key '" + key + "'");
    node = &(*node)[part];
  }
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    throw data_error("override " + key + ": cannot parse value '" + value + "'");
  }
  const bool numeric_ok = node->is_number() && parsed.is_number();
  if (!numeric_ok && node->type() != parsed.type()) {
    throw data_error("override " + key + ": type mismatch for value '" + value + "'");
  }
  *node = parsed;
  h = hyper_from_json(j);
}

ScheduledValues scheduled_values(const SslHyper& h, std::int64_t step) {
  const std::int64_t total = h.total_steps();
  const std::int64_t s = std::clamp<std::int64_t>(step, 0, total);
  const auto temp = h.teacher_temp_schedule();
  ScheduledValues v;
  v.lr = nc::schedule_value(h.lr_schedule(), s);
  v.teacher_temp = nc::schedule_value(temp, std::min(s, temp.total_steps));
  v.momentum = nc::schedule_value(h.momentum_schedule(), s);
  v.weight_decay = nc::schedule_value(h.weight_decay_schedule(), s);
  return v;
}

SslState SslState::init(const SslHyper& h) {
  h.validate();
  SslState s;
  s.student = init_params(h.encoder, h.head, derive_seed(h.seed, 1), true);
  s.teacher = s.student;
  for (auto& [_, t] : s.teacher) t.set_requires_grad(false);
  s.dino_center = Tensor::zeros({1, h.head.prototypes});
  s.ibot_center = Tensor::zeros({1, h.head.prototypes});
  s.optimizer = nc::AdamW(h.adamw);
  return s;
}

std::vector<Tensor*> SslState::student_params() {
  std::vector<Tensor*> out;
  for (auto& [_, t] : student) out.push_back(&t);
  return out;
}

void ema_update(ParamSet& teacher, const ParamSet& student, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw data_error("ema_update: momentum must be in [0, 1]");
  if (teacher.size() != student.size()) throw shape_error("ema_update: parameter sets differ");
  for (auto& [name, t] : teacher) {
    auto it = student.find(name);
    if (it == student.end() || it->second.shape() != t.shape()) {
      throw shape_error("ema_update: shape mismatch for '" + name + "'");
    }
    auto dst = t.mutable_data();
    const auto src = it->second.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = m * dst[i] + (1.0 - m) * src[i];
  }
}

namespace {

std::string dump_terms(const StepMetrics& m) {
  std::ostringstream os;
  os << "step " << m.step << ": dino=" << m.dino_loss << " ibot=" << m.ibot_loss << " koleo=" << m.koleo_loss
     << " total=" << m.total_loss << " lr=" << m.lr << " teacher_temp=" << m.teacher_temp;
  return os.str();
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  std::vector<double> data;
  std::size_t cols = 0, n = 0;
  for (const auto& r : rows) {
    cols = r.cols();
    n += r.rows();
    data.insert(data.end(), r.data().begin(), r.data().end());
  }
  return Tensor({n, cols}, std::move(data));
}

}  // namespace

StepMetrics train_step(SslState& state, const std::vector<slide::CropSet>& batch, const SslHyper& hyper,
                       std::int64_t step) {
  if (batch.empty()) throw data_error("train_step: empty batch");
  const auto sched = scheduled_values(hyper, step);
  const std::int64_t epoch = step / hyper.steps_per_epoch;
  const EncoderConfig& enc = hyper.encoder;
  const std::size_t T = enc.tokens();

  StepMetrics metrics;
  metrics.step = step;
  metrics.lr = sched.lr;
  metrics.teacher_temp = sched.teacher_temp;
  metrics.momentum = sched.momentum;
  metrics.weight_decay = sched.weight_decay;

  // Teacher: unmasked global views only, no gradient.
  nc::Tape teacher_tape;
  const BoundParams tp = bind(teacher_tape, state.teacher);
  std::vector<Tensor> teacher_dino;             // per image [G, K]
  std::vector<std::vector<Tensor>> teacher_tok;  // per image, per global view [T, K]
  std::vector<Tensor> all_teacher_tok;
  for (const auto& set : batch) {
    std::vector<Var> globals;
    std::vector<Tensor> toks;
    for (const auto& v : set.global_views) {
      Encoded e = encode(enc, tp, teacher_tape.constant(token_inputs(v.pixels, enc)), nullptr, Path::teacher);
      globals.push_back(e.global);
      toks.push_back(head_logits(tp, "ibot_head", e.tokens).value());
      all_teacher_tok.push_back(toks.back());
    }
    std::vector<Tensor> g;
    for (auto& v : globals) g.push_back(head_logits(tp, "dino_head", v).value());
    teacher_dino.push_back(stack_rows(g));
    teacher_tok.push_back(std::move(toks));
  }

  const Tensor zero_center = Tensor::zeros(state.dino_center.shape());
  const Tensor& dino_center = hyper.centering ? state.dino_center : zero_center;
  const Tensor& ibot_center = hyper.centering ? state.ibot_center : zero_center;

  // Student: all views, global views masked.
  nc::Tape tape;
  const BoundParams sp = bind(tape, state.student);
  Var dino_total = tape.constant(Tensor::scalar(0.0));
  Var ibot_total = tape.constant(Tensor::scalar(0.0));
  std::size_t ibot_terms = 0;
  std::vector<Var> student_global_feats;
  double entropy = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& set = batch[b];
    std::vector<Var> feats;
    for (std::size_t v = 0; v < set.global_views.size(); ++v) {
      const auto mask = sample_token_mask(
          T, hyper.mask_ratio,
          derive_seed(hyper.seed, static_cast<std::uint64_t>(step) * 1000003ULL + b * 101ULL + v));
      Encoded e = encode(enc, sp, tape.constant(token_inputs(set.global_views[v].pixels, enc)), &mask, Path::student);
      feats.push_back(e.global);
      student_global_feats.push_back(e.global);
      if (std::count(mask.begin(), mask.end(), true) > 0) {
        Var logits = head_logits(sp, "ibot_head", e.tokens);
        ibot_total = nc::add(ibot_total, ibot_loss(teacher_tok[b][v], logits, mask, ibot_center, sched.teacher_temp,
                                                   hyper.student_temp));
        ++ibot_terms;
      }
    }
    for (const auto& v : set.local_views) {
      feats.push_back(encode(enc, sp, tape.constant(token_inputs(v.pixels, enc))).global);
    }
    Var stacked = nc::concat_rows(feats);
    Var student_logits = head_logits(sp, "dino_head", stacked);
    dino_total = nc::add(dino_total, dino_loss(teacher_dino[b], student_logits, dino_center, sched.teacher_temp,
                                               hyper.student_temp));
    entropy += mean_entropy(teacher_probs(teacher_dino[b], dino_center, sched.teacher_temp));
  }
  metrics.teacher_entropy = entropy / static_cast<double>(batch.size());

  Var l_dino = nc::scale(dino_total, 1.0 / static_cast<double>(batch.size()));
  Var l_ibot = ibot_terms > 0 ? nc::scale(ibot_total, 1.0 / static_cast<double>(ibot_terms)) : ibot_total;
  Var l_koleo = tape.constant(Tensor::scalar(0.0));
  if (hyper.lambda_koleo > 0.0 && student_global_feats.size() >= 2) {
    l_koleo = koleo_loss(nc::concat_rows(student_global_feats));
  }
  Var total = nc::add(nc::add(nc::scale(l_dino, hyper.lambda_dino), nc::scale(l_ibot, hyper.lambda_ibot)),
                      nc::scale(l_koleo, hyper.lambda_koleo));

  metrics.dino_loss = l_dino.value().item();
  metrics.ibot_loss = l_ibot.value().item();
  metrics.koleo_loss = l_koleo.value().item();
  metrics.total_loss = total.value().item();
  if (!std::isfinite(metrics.total_loss)) throw numeric_error("train_step: non-finite loss; " + dump_terms(metrics));

  auto params = state.student_params();
  for (auto* p : params) p->zero_grad();
  tape.backward(total);
  metrics.grad_norm = nc::clip_global_norm(params, hyper.clip_norm);
  std::vector<std::pair<std::string, Tensor>> frozen;
  if (epoch < hyper.freeze_last_layer_epochs) {
    for (const std::string prefix : {"dino_head", "ibot_head"}) {
      Tensor& proto = state.student.at(prototype_name(prefix));
      proto.zero_grad();
      frozen.emplace_back(prototype_name(prefix), proto);
    }
  }
  state.optimizer.step(params, sched.lr, sched.weight_decay);
  // Decoupled weight decay would still move zero-gradient prototypes.
  for (auto& [name, value] : frozen) state.student.at(name) = std::move(value);

  ema_update(state.teacher, state.student, sched.momentum);
  if (hyper.centering) {
    state.dino_center = update_center(state.dino_center, stack_rows(teacher_dino), hyper.center_momentum);
    state.ibot_center = update_center(state.ibot_center, stack_rows(all_teacher_tok), hyper.center_momentum);
  }
  state.step = step + 1;
  state.epoch = state.step / hyper.steps_per_epoch;
  return metrics;
}

std::vector<StepMetrics> pretrain(SslState& state, const std::vector<slide::RgbImage>& patches, const SslHyper& hyper,
                                  std::int64_t steps, std::int64_t batch_size) {
  if (patches.empty()) throw data_error("pretrain: no patches");
  if (batch_size < 1) throw data_error("pretrain: batch size must be >= 1");
  std::vector<StepMetrics> out;
  for (std::int64_t i = 0; i < steps; ++i) {
    const std::int64_t step = state.step;
    Rng rng(derive_seed(hyper.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(step)));
    std::vector<slide::CropSet> batch;
    for (std::int64_t b = 0; b < batch_size; ++b) {
      const auto& src = patches[rng.below(patches.size())];
      batch.push_back(slide::make_crop_set(src, hyper.crops, rng.next_u64()));
    }
    out.push_back(train_step(state, batch, hyper, step));
    spdlog::debug("step {} loss {:.6f} (dino {:.6f} ibot {:.6f} koleo {:.6f})", step, out.back().total_loss,
                  out.back().dino_loss, out.back().ibot_loss, out.back().koleo_loss);
  }
  return out;
}

Tensor extract_features(const SslState& state, const SslHyper& hyper, const std::vector<slide::RgbImage>& patches) {
  ParamSet snapshot = state.teacher;
  const std::size_t d = hyper.encoder.feature_dim();
  std::vector<double> rows;
  rows.reserve(patches.size() * d);
  for (const auto& p : patches) {
    nc::Tape tape;
    const BoundParams bp = bind(tape, snapshot);
    Encoded e = encode(hyper.encoder, bp, tape.constant(token_inputs(p, hyper.encoder)), nullptr, Path::teacher);
    const auto g = e.global.value().data();
    rows.insert(rows.end(), g.begin(), g.end());
  }
  return Tensor({patches.size(), d}, std::move(rows));
}

}  // namespace porc::ssl
