// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "porc/error.hpp"
#include "porc/numeric/ops.hpp"
#include "porc/slide/crops.hpp"
#include "porc/ssl/checkpoint.hpp"
#include "porc/ssl/encoder.hpp"
#include "porc/ssl/losses.hpp"
#include "porc/ssl/trainer.hpp"
#include "support.hpp"

using namespace porc;
using namespace porc::ssl;
using nc::Tape;
using nc::Tensor;
using nc::Var;

namespace {

std::vector<slide::RgbImage> two_clusters(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<slide::RgbImage> out;
  for (std::size_t i = 0; i < n; ++i) {
    slide::RgbImage img(48, 48);
    const bool a = i % 2 == 0;
    for (std::uint32_t y = 0; y < 48; ++y)
      for (std::uint32_t x = 0; x < 48; ++x) {
        const auto j = [&](int base) { return static_cast<std::uint8_t>(std::clamp(base + static_cast<int>(rng.normal(0, 10)), 0, 255)); };
        if (a) img.set(x, y, j(170), j(70), j(160));
        else img.set(x, y, j(230), j(170), j(200));
      }
    out.push_back(std::move(img));
  }
  return out;
}

double param_max_abs_diff(const ParamSet& a, const ParamSet& b, const std::string& skip = "") {
  double worst = 0.0;
  for (const auto& [name, t] : a) {
    if (name == skip) continue;
    const auto& u = b.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) worst = std::max(worst, std::abs(t[i] - u[i]));
  }
  return worst;
}

}  // namespace

TEST_CASE("dino_loss closed forms") {
  const Tensor zc = Tensor::zeros({1, 2});
  SUBCASE("uniform/uniform gives ln K") {
    for (std::size_t K : {2, 4, 64}) {
      Tape tape;
      Tensor s = Tensor::zeros({3, K});
      const double l = dino_loss(Tensor::zeros({2, K}), tape.constant(s), Tensor::zeros({1, K}), 0.04, 0.1).value().item();
      CHECK(std::abs(l - std::log(static_cast<double>(K))) < 1e-12);
    }
  }
  SUBCASE("p_t = [1,0], p_s uniform gives ln 2") {
    Tape tape;
    const Tensor t = Tensor::matrix(1, 2, {1000.0, 0.0});
    const double l = dino_loss(t, tape.constant(Tensor::zeros({2, 2})), zc, 1.0, 0.1).value().item();
    CHECK(std::abs(l - std::log(2.0)) < 1e-12);
  }
  SUBCASE("perfect match gives 0") {
    Tape tape;
    const Tensor t = Tensor::matrix(1, 2, {1000.0, 0.0});
    const double l =
        dino_loss(t, tape.constant(Tensor::matrix(2, 2, {1000.0, 0.0, 1000.0, 0.0})), zc, 1.0, 0.1).value().item();
    CHECK(std::abs(l) < 1e-12);
  }
  SUBCASE("same-view pairs are skipped") {
    Tape tape;
    // Teacher view 0 disagrees with student view 0 only; skipping that pair leaves a perfect match.
    const Tensor t = Tensor::matrix(2, 2, {1000.0, 0.0, 1000.0, 0.0});
    const Tensor s = Tensor::matrix(3, 2, {0.0, 1000.0, 1000.0, 0.0, 1000.0, 0.0});
    const double skipped = dino_loss(t, tape.constant(s), zc, 1.0, 0.1).value().item();
    CHECK(skipped > 0.0);
    const Tensor s2 = Tensor::matrix(3, 2, {1000.0, 0.0, 1000.0, 0.0, 1000.0, 0.0});
    CHECK(std::abs(dino_loss(t, tape.constant(s2), zc, 1.0, 0.1).value().item()) < 1e-12);
  }
  SUBCASE("K mismatch is rejected") {
    Tape tape;
    CHECK_THROWS_AS(dino_loss(Tensor::zeros({1, 3}), tape.constant(Tensor::zeros({2, 2})), Tensor::zeros({1, 3}), 0.1, 0.1),
                    shape_error);
  }
  SUBCASE("non-negative on random inputs") {
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
      Tape tape;
      const double l = dino_loss(test::random_tensor(rng, {2, 8}, -3, 3), tape.constant(test::random_tensor(rng, {4, 8}, -3, 3)),
                                 test::random_tensor(rng, {1, 8}), 0.04, 0.1)
                           .value()
                           .item();
      CHECK(l >= 0.0);
    }
  }
}

TEST_CASE("ibot_loss closed forms") {
  const Tensor zc = Tensor::zeros({1, 4});
  Tape tape;
  CHECK(ibot_loss(Tensor::zeros({3, 4}), tape.constant(Tensor::zeros({3, 4})), {false, false, false}, zc, 0.04, 0.1)
            .value()
            .item() == 0.0);
  const double two = ibot_loss(Tensor::zeros({3, 4}), tape.constant(Tensor::zeros({3, 4})), {true, false, true}, zc, 0.04, 0.1)
                         .value()
                         .item();
  CHECK(std::abs(two - std::log(4.0)) < 1e-12);
  const Tensor t = Tensor::matrix(2, 4, {1000, 0, 0, 0, 0, 0, 0, 0});
  const Tensor s = Tensor::matrix(2, 4, {1000, 0, 0, 0, 5, 5, 5, 5});
  CHECK(std::abs(ibot_loss(t, tape.constant(s), {true, false}, zc, 1.0, 0.1).value().item()) < 1e-12);
  CHECK_THROWS_AS(ibot_loss(t, tape.constant(s), {true}, zc, 1.0, 0.1), shape_error);
}

TEST_CASE("koleo_loss closed forms") {
  Tape tape;
  const double ortho = koleo_loss(tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}))).value().item();
  CHECK(std::abs(ortho + std::log(std::sqrt(2.0))) < 1e-12);
  const double same = koleo_loss(tape.constant(Tensor::matrix(2, 2, {1, 0, 1, 0}))).value().item();
  CHECK(std::abs(same + std::log(1e-8)) < 1e-9);
  const double c = std::cos(std::numbers::pi / 3), s = std::sin(std::numbers::pi / 3);
  // Unit vectors at 0, 60 and 120 degrees: nearest-neighbor distance 1 for each.
  const double unit = koleo_loss(tape.constant(Tensor::matrix(3, 2, {1, 0, c, s, -c, s}))).value().item();
  CHECK(std::abs(unit) < 1e-12);
  CHECK_THROWS_AS(koleo_loss(tape.constant(Tensor::matrix(1, 2, {1, 0}))), data_error);
}

TEST_CASE("center update") {
  const Tensor c0 = Tensor::row({1.0, -2.0, 0.5});
  const Tensor batch = Tensor::matrix(2, 3, {0.0, 1.0, 2.0, 2.0, 3.0, 4.0});  // mean [1, 2, 3]
  const Tensor a = update_center(c0, batch, 0.0);
  CHECK(a[0] == 1.0);
  CHECK(a[1] == 2.0);
  CHECK(a[2] == 3.0);
  const Tensor fixed = update_center(Tensor::row({1.0, 2.0, 3.0}), batch, 0.9);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(fixed[i] - (i + 1.0)) < 1e-15);
  Tensor c = c0;
  for (int k = 0; k < 25; ++k) c = update_center(c, batch, 0.9);
  const double mk = std::pow(0.9, 25);
  const std::vector<double> mu = {1, 2, 3};
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(c[i] - (mk * c0[i] + (1 - mk) * mu[i])) < 1e-12);
  CHECK_THROWS_AS(update_center(c0, batch, 1.0), data_error);
}

TEST_CASE("ema_update") {
  ParamSet t{{"a", Tensor::row({1.0})}}, s{{"a", Tensor::row({0.0})}};
  ema_update(t, s, 0.992);
  CHECK(t.at("a")[0] == 0.992);
  ema_update(t, s, 1.0);
  CHECK(t.at("a")[0] == 0.992);
  ParamSet bad{{"a", Tensor::row({0.0, 1.0})}};
  CHECK_THROWS_AS(ema_update(t, bad, 0.5), shape_error);

  ParamSet tk{{"w", Tensor::row({3.0, -1.0})}}, sk{{"w", Tensor::row({0.5, 2.0})}};
  for (int k = 0; k < 100; ++k) ema_update(tk, sk, 0.992);
  const double mk = std::pow(0.992, 100);
  CHECK(std::abs(tk.at("w")[0] - (mk * 3.0 + (1 - mk) * 0.5)) < 1e-12);
  CHECK(std::abs(tk.at("w")[1] - (mk * -1.0 + (1 - mk) * 2.0)) < 1e-12);
}

TEST_CASE("token masks") {
  auto count = [](const std::vector<bool>& m) { return std::count(m.begin(), m.end(), true); };
  CHECK(count(sample_token_mask(16, {0.5, 0.5}, 1)) == 8);
  CHECK(count(sample_token_mask(16, {0.1, 0.1}, 1)) == 2);
  CHECK(sample_token_mask(16, {0.1, 0.5}, 9) == sample_token_mask(16, {0.1, 0.5}, 9));
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto n = count(sample_token_mask(16, {0.1, 0.5}, s));
    CHECK(n >= 2);
    CHECK(n <= 8);
  }
}

TEST_CASE("encoder") {
  EncoderConfig cfg;
  cfg.depth = 0;
  cfg.embed_dim = cfg.token_input_dim();
  ParamSet ps = identity_encoder_params(cfg);
  slide::RgbImage img(8, 8);
  Rng rng(1);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));

  SUBCASE("zero depth, identity embed -> normalized mean of token pixels") {
    Tape tape;
    const auto bp = bind(tape, ps);
    const Tensor tin = token_inputs(img, cfg);
    const auto g = encode(cfg, bp, tape.constant(tin)).global.value();
    std::vector<double> mean(cfg.embed_dim, 0.0);
    for (std::size_t r = 0; r < tin.rows(); ++r)
      for (std::size_t c = 0; c < tin.cols(); ++c) mean[c] += tin.at(r, c) / static_cast<double>(tin.rows());
    double n = 0;
    for (double v : mean) n += v * v;
    for (std::size_t c = 0; c < mean.size(); ++c) CHECK(std::abs(g[c] - mean[c] / std::sqrt(n)) < 1e-12);
  }
  SUBCASE("all-false mask equals unmasked; teacher path rejects masks") {
    EncoderConfig full;
    ParamSet fp = init_params(full, HeadConfig{}, 3);
    Tape tape;
    const auto bp = bind(tape, fp);
    const Var tin = tape.constant(token_inputs(img, full));
    const std::vector<bool> none(full.tokens(), false);
    const auto a = encode(full, bp, tin).global.value();
    const auto b = encode(full, bp, tin, &none).global.value();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    CHECK_THROWS_AS(encode(full, bp, tin, &none, Path::teacher), data_error);
    const std::vector<bool> short_mask(3, false);
    CHECK_THROWS_AS(encode(full, bp, tin, &short_mask), shape_error);
  }
}

TEST_CASE("student-parameter gradients of the three losses match finite differences") {
  EncoderConfig enc;
  enc.grid = 2;
  enc.pool = 2;
  enc.embed_dim = 6;
  enc.depth = 1;
  enc.mlp_hidden = 5;
  HeadConfig head;
  head.hidden = 5;
  head.bottleneck = 4;
  head.prototypes = 6;
  ParamSet ps = init_params(enc, head, 21);
  std::vector<Tensor*> params;
  for (auto& [name, t] : ps) params.push_back(&t);
  Rng rng(4);
  const Tensor views[3] = {test::random_tensor(rng, {4, 12}, 0, 1), test::random_tensor(rng, {4, 12}, 0, 1),
                           test::random_tensor(rng, {4, 12}, 0, 1)};
  const Tensor teacher = test::random_tensor(rng, {2, 6});
  const Tensor teacher_tok = test::random_tensor(rng, {4, 6});
  const Tensor center = test::random_tensor(rng, {1, 6}, -0.1, 0.1);
  const std::vector<bool> mask = {true, false, true, false};
  const double err = test::grad_check(params, [&](Tape& t) {
    const auto bp = bind(t, ps);
    std::vector<Var> g;
    Var tokens;
    for (int v = 0; v < 3; ++v) {
      const auto e = encode(enc, bp, t.constant(views[v]), v == 0 ? &mask : nullptr);
      g.push_back(e.global);
      if (v == 0) tokens = e.tokens;
    }
    Var feats = nc::concat_rows(g);
    Var dl = dino_loss(teacher, head_logits(bp, "dino_head", feats), center, 0.04, 0.1);
    Var il = ibot_loss(teacher_tok, head_logits(bp, "ibot_head", tokens), mask, center, 0.04, 0.1);
    return nc::add(nc::add(dl, il), nc::scale(koleo_loss(feats), 0.1));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("hyperparameters: desk defaults, json round-trip and overrides") {
  const SslHyper paper;
  CHECK(paper.lr_start == 0.0);
  CHECK(paper.lr_peak == 2e-3);
  CHECK(paper.lr_final == 1e-6);
  CHECK(paper.teacher_temp_start == 0.04);
  CHECK(paper.teacher_temp_final == 0.4);
  CHECK(paper.momentum_start == 0.992);
  CHECK(paper.momentum_final == 1.0);
  CHECK(paper.weight_decay_start == 0.04);
  CHECK(paper.weight_decay_final == 0.4);
  CHECK(paper.clip_norm == 3.0);
  CHECK(paper.crops.global_count == 2);
  CHECK(paper.crops.local_count == 8);
  CHECK(paper.crops.global_size == 224);
  CHECK(paper.crops.local_size == 96);
  CHECK(paper.mask_ratio == std::pair{0.1, 0.5});

  SslHyper h = SslHyper::desk();
  CHECK(to_json(hyper_from_json(to_json(h))) == to_json(h));
  apply_override(h, "crops.global_size", "48");
  CHECK(h.crops.global_size == 48);
  apply_override(h, "lr.peak", "0.001");
  CHECK(h.lr_peak == 0.001);
  apply_override(h, "centering", "false");
  CHECK(!h.centering);
  CHECK_THROWS_AS(apply_override(h, "lr.bogus", "1"), data_error);
  CHECK_THROWS_AS(apply_override(h, "centering", "\"yes\""), data_error);
  CHECK_THROWS_AS(apply_override(h, "lr.peak", "not json"), data_error);
  h.mask_ratio = {0.6, 0.2};
  CHECK_THROWS_AS(h.validate(), data_error);
}

TEST_CASE("train_step bookkeeping") {
  SslHyper h = SslHyper::desk();
  h.seed = 5;
  const auto patches = two_clusters(4, 1);
  std::vector<slide::CropSet> batch;
  for (std::size_t i = 0; i < patches.size(); ++i) batch.push_back(slide::make_crop_set(patches[i], h.crops, i));

  SUBCASE("reported schedule values equal schedule_value") {
    SslState st = SslState::init(h);
    for (std::int64_t step = 0; step < 3; ++step) {
      const auto m = train_step(st, batch, h, step);
      const auto v = scheduled_values(h, step);
      CHECK(m.lr == v.lr);
      CHECK(m.teacher_temp == v.teacher_temp);
      CHECK(m.momentum == v.momentum);
      CHECK(m.weight_decay == v.weight_decay);
      CHECK(m.lr == nc::schedule_value(h.lr_schedule(), step));
      CHECK(std::abs(m.total_loss - (h.lambda_dino * m.dino_loss + h.lambda_ibot * m.ibot_loss +
                                     h.lambda_koleo * m.koleo_loss)) < 1e-12);
    }
    CHECK(st.step == 3);
  }
  SUBCASE("lr 0 leaves the student alone while the teacher EMA-moves") {
    h.lr_start = h.lr_peak = h.lr_final = 0.0;
    SslState st = SslState::init(h);
    for (auto& [name, t] : st.teacher)
      for (double& v : t.mutable_data()) v += 0.25;
    const ParamSet s0 = st.student, t0 = st.teacher;
    const auto m = train_step(st, batch, h, 0);
    CHECK(param_max_abs_diff(st.student, s0) == 0.0);
    double worst = 0.0;
    for (const auto& [name, t] : st.teacher)
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double expect = m.momentum * t0.at(name)[i] + (1 - m.momentum) * s0.at(name)[i];
        worst = std::max(worst, std::abs(t[i] - expect));
      }
    CHECK(worst < 1e-15);
    CHECK(param_max_abs_diff(st.teacher, t0) > 1e-4);
  }
  SUBCASE("teacher is untouched by backward; prototypes frozen in the first epoch") {
    h.momentum_start = h.momentum_final = 1.0;
    SslState st = SslState::init(h);
    const ParamSet s0 = st.student, t0 = st.teacher;
    train_step(st, batch, h, 1);
    train_step(st, batch, h, 2);
    for (const auto& [name, t] : st.teacher) {
      CHECK(std::equal(t.data().begin(), t.data().end(), t0.at(name).data().begin()));
      CHECK(!t.has_grad());
    }
    CHECK(param_max_abs_diff(st.student, s0, prototype_name("dino_head")) > 0.0);
    for (const char* p : {"dino_head", "ibot_head"}) {
      const auto& a = st.student.at(prototype_name(p));
      CHECK(std::equal(a.data().begin(), a.data().end(), s0.at(prototype_name(p)).data().begin()));
    }
    train_step(st, batch, h, h.steps_per_epoch);
    const auto& a = st.student.at(prototype_name("dino_head"));
    CHECK(!std::equal(a.data().begin(), a.data().end(), s0.at(prototype_name("dino_head")).data().begin()));
  }
  SUBCASE("non-finite loss aborts with a term dump") {
    SslState st = SslState::init(h);
    st.student.begin()->second.mutable_data()[0] = std::nan("");
    try {
      train_step(st, batch, h, 0);
      FAIL("expected numeric_error");
    } catch (const numeric_error& e) {
      CHECK(std::string(e.what()).find("dino") != std::string::npos);
    }
  }
}

TEST_CASE("200 steps on two-cluster patches lower the loss without collapsing") {
  SslHyper h = SslHyper::desk();
  h.seed = 7;
  SslState st = SslState::init(h);
  const auto log = pretrain(st, two_clusters(16, 3), h, 200, h.batch_size);
  REQUIRE(log.size() == 200);
  CHECK(log.back().total_loss < log.front().total_loss);
  const double floor = 0.1 * std::log(static_cast<double>(h.head.prototypes));
  for (const auto& m : log) CHECK(m.teacher_entropy > floor);
}

TEST_CASE("extract_features") {
  SslHyper h = SslHyper::desk();
  SslState st = SslState::init(h);
  auto patches = two_clusters(3, 8);
  patches.push_back(patches[1]);
  const Tensor f = extract_features(st, h, patches);
  REQUIRE(f.rows() == 4);
  for (std::size_t r = 0; r < 4; ++r) {
    double n = 0;
    for (std::size_t c = 0; c < f.cols(); ++c) n += f.at(r, c) * f.at(r, c);
    CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-12);
    CHECK(f.at(1, r % f.cols()) == f.at(3, r % f.cols()));
  }
  const Tensor g = extract_features(st, h, {patches[2], patches[0]});
  for (std::size_t c = 0; c < f.cols(); ++c) {
    CHECK(g.at(0, c) == f.at(2, c));
    CHECK(g.at(1, c) == f.at(0, c));
  }
}

TEST_CASE("checkpoints round-trip and resume deterministically") {
  SslHyper h = SslHyper::desk();
  h.seed = 3;
  const auto patches = two_clusters(6, 2);
  SslState a = SslState::init(h);
  pretrain(a, patches, h, 4, 2);

  SslState b = SslState::init(h);
  pretrain(b, patches, h, 2, 2);
  auto ck = parse_checkpoint(serialize_checkpoint(h, b));
  CHECK(serialize_checkpoint(ck.hyper, ck.state) == serialize_checkpoint(h, b));
  pretrain(ck.state, patches, ck.hyper, 2, 2);
  CHECK(serialize_checkpoint(h, a) == serialize_checkpoint(ck.hyper, ck.state));

  auto bytes = serialize_checkpoint(h, a);
  bytes.push_back(0);
  CHECK_THROWS_AS(parse_checkpoint(bytes), data_error);
  bytes.resize(bytes.size() - 20);
  CHECK_THROWS_AS(parse_checkpoint(bytes), data_error);
}
