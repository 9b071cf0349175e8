// SPDX-License-Identifier: Apache-2.0
#include "porc/ssl/encoder.hpp"

#include <cmath>

#include "porc/error.hpp"
#include "porc/util/random.hpp"

namespace porc::ssl {

using nc::Tensor;
using nc::Var;

nc::Tensor token_inputs(const slide::RgbImage& view, const EncoderConfig& cfg) {
  const std::size_t cells = cfg.grid * cfg.pool;
  if (view.width < cells || view.height < cells) {
    throw data_error("encode: view " + std::to_string(view.width) + "x" + std::to_string(view.height) +
                     " smaller than the " + std::to_string(cells) + "-cell token grid");
  }
  const std::size_t T = cfg.tokens(), p = cfg.token_input_dim();
  std::vector<double> out(T * p, 0.0);
  for (std::size_t cy = 0; cy < cells; ++cy) {
    const std::size_t y0 = cy * view.height / cells, y1 = (cy + 1) * view.height / cells;
    for (std::size_t cx = 0; cx < cells; ++cx) {
      const std::size_t x0 = cx * view.width / cells, x1 = (cx + 1) * view.width / cells;
      double acc[3] = {0, 0, 0};
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x)
          for (int c = 0; c < 3; ++c)
            acc[c] += view.at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y), c);
      const double n = static_cast<double>((y1 - y0) * (x1 - x0)) * 255.0;
      const std::size_t token = (cy / cfg.pool) * cfg.grid + cx / cfg.pool;
      const std::size_t sub = (cy % cfg.pool) * cfg.pool + cx % cfg.pool;
      for (int c = 0; c < 3; ++c) out[token * p + sub * 3 + c] = acc[c] / n;
    }
  }
  return Tensor({T, p}, std::move(out));
}

namespace {

Tensor gaussian(nc::Shape shape, double stddev, Rng& rng, bool requires_grad) {
  const std::size_t n = nc::shape_size(shape);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

std::string block(std::size_t i, const char* leaf) { return "enc.blocks." + std::to_string(i) + "." + leaf; }

}  // namespace

std::string prototype_name(const std::string& prefix) { return prefix + ".proto"; }

ParamSet init_params(const EncoderConfig& enc, const HeadConfig& head, std::uint64_t seed, bool rg) {
  Rng rng(seed);
  const std::size_t p = enc.token_input_dim(), e = enc.embed_dim, T = enc.tokens(), h = enc.mlp_hidden;
  ParamSet ps;
  ps["enc.embed.w"] = gaussian({p, e}, 1.0 / std::sqrt(static_cast<double>(p)), rng, rg);
  ps["enc.embed.b"] = Tensor::zeros({1, e}, rg);
  ps["enc.mask_token"] = gaussian({1, e}, 0.1, rng, rg);
  for (std::size_t i = 0; i < enc.depth; ++i) {
    ps[block(i, "mix")] = gaussian({T, T}, 0.1 / std::sqrt(static_cast<double>(T)), rng, rg);
    ps[block(i, "mlp1.w")] = gaussian({e, h}, 1.0 / std::sqrt(static_cast<double>(e)), rng, rg);
    ps[block(i, "mlp1.b")] = Tensor::zeros({1, h}, rg);
    ps[block(i, "mlp2.w")] = gaussian({h, e}, 1.0 / std::sqrt(static_cast<double>(h)), rng, rg);
    ps[block(i, "mlp2.b")] = Tensor::zeros({1, e}, rg);
    ps[block(i, "ln.g")] = Tensor::filled({1, e}, 1.0, rg);
    ps[block(i, "ln.b")] = Tensor::zeros({1, e}, rg);
  }
  for (const std::string prefix : {"dino_head", "ibot_head"}) {
    ps[prefix + ".fc1.w"] = gaussian({e, head.hidden}, 1.0 / std::sqrt(static_cast<double>(e)), rng, rg);
    ps[prefix + ".fc1.b"] = Tensor::zeros({1, head.hidden}, rg);
    ps[prefix + ".fc2.w"] =
        gaussian({head.hidden, head.bottleneck}, 1.0 / std::sqrt(static_cast<double>(head.hidden)), rng, rg);
    ps[prefix + ".fc2.b"] = Tensor::zeros({1, head.bottleneck}, rg);
    ps[prototype_name(prefix)] = gaussian({head.prototypes, head.bottleneck}, 1.0, rng, rg);
  }
  return ps;
}

ParamSet identity_encoder_params(const EncoderConfig& enc) {
  if (enc.depth != 0 || enc.embed_dim != enc.token_input_dim()) {
    throw data_error("identity encoder needs depth 0 and embed_dim == token_input_dim");
  }
  const std::size_t p = enc.token_input_dim();
  ParamSet ps;
  std::vector<double> eye(p * p, 0.0);
  for (std::size_t i = 0; i < p; ++i) eye[i * p + i] = 1.0;
  ps["enc.embed.w"] = Tensor({p, p}, std::move(eye), true);
  ps["enc.embed.b"] = Tensor::zeros({1, p}, true);
  ps["enc.mask_token"] = Tensor::zeros({1, p}, true);
  return ps;
}

BoundParams bind(nc::Tape& tape, ParamSet& params) {
  BoundParams out;
  for (auto& [name, t] : params) out.emplace(name, tape.param(t));
  return out;
}

namespace {

const Var& get(const BoundParams& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw data_error("missing parameter '" + name + "'");
  return it->second;
}

}  // namespace

Encoded encode(const EncoderConfig& cfg, const BoundParams& params, Var token_input,
               const std::vector<bool>* token_mask, Path path) {
  const std::size_t T = cfg.tokens();
  if (token_input.value().rows() != T || token_input.value().cols() != cfg.token_input_dim()) {
    throw shape_error("encode: token input " + nc::shape_str(token_input.shape()) + " does not match grid " +
                      std::to_string(T) + " x " + std::to_string(cfg.token_input_dim()));
  }
  nc::Tape& tape = *token_input.tape;
  Var x = nc::add(nc::matmul(token_input, get(params, "enc.embed.w")), get(params, "enc.embed.b"));

  if (token_mask != nullptr) {
    if (path == Path::teacher) throw data_error("encode: the teacher path only takes unmasked views");
    if (token_mask->size() != T) {
      throw shape_error("encode: mask length " + std::to_string(token_mask->size()) + " vs " + std::to_string(T) +
                        " tokens");
    }
    std::vector<double> keep(T), put(T);
    bool any = false;
    for (std::size_t i = 0; i < T; ++i) {
      keep[i] = (*token_mask)[i] ? 0.0 : 1.0;
      put[i] = 1.0 - keep[i];
      any = any || (*token_mask)[i];
    }
    if (any) {
      Var keep_col = tape.constant(Tensor({T, 1}, std::move(keep)));
      Var put_col = tape.constant(Tensor({T, 1}, std::move(put)));
      x = nc::add(nc::mul(x, keep_col), nc::matmul(put_col, get(params, "enc.mask_token")));
    }
  }

  for (std::size_t i = 0; i < cfg.depth; ++i) {
    x = nc::add(x, nc::matmul(get(params, block(i, "mix")), x));
    Var h = nc::gelu(nc::add(nc::matmul(x, get(params, block(i, "mlp1.w"))), get(params, block(i, "mlp1.b"))));
    x = nc::add(x, nc::add(nc::matmul(h, get(params, block(i, "mlp2.w"))), get(params, block(i, "mlp2.b"))));
    x = nc::add(nc::mul(nc::layer_norm(x), get(params, block(i, "ln.g"))), get(params, block(i, "ln.b")));
  }
  return Encoded{nc::l2_normalize(nc::mean_over_rows(x)), x};
}

Var head_logits(const BoundParams& params, const std::string& prefix, Var features) {
  Var h = nc::gelu(nc::add(nc::matmul(features, get(params, prefix + ".fc1.w")), get(params, prefix + ".fc1.b")));
  Var z = nc::l2_normalize(nc::add(nc::matmul(h, get(params, prefix + ".fc2.w")), get(params, prefix + ".fc2.b")));
  Var w = nc::l2_normalize(get(params, prototype_name(prefix)));
  return nc::matmul(z, nc::transpose(w));
}

}  // namespace porc::ssl
