// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "porc/numeric/ops.hpp"
#include "porc/numeric/tensor.hpp"
#include "porc/slide/image.hpp"

namespace porc::ssl {

/// Named parameters; std::map keeps iteration order (and addresses) stable.
using ParamSet = std::map<std::string, nc::Tensor>;
using BoundParams = std::map<std::string, nc::Var>;

/// Compact token encoder standing in for a ViT.
///
/// A view is cut into grid x grid tokens; each token's input is its pixels
/// area-pooled to pool x pool RGB cells (values in [0,1]). Tokens are
/// embedded, optionally replaced by a learned mask embedding, then pass
/// through `depth` blocks of token-mixing linear, per-token MLP and
/// layer-norm. The global feature is the l2-normalized token mean.
struct EncoderConfig {
  std::size_t grid = 4;
  std::size_t pool = 2;
  std::size_t embed_dim = 16;
  std::size_t depth = 2;
  std::size_t mlp_hidden = 32;

  std::size_t tokens() const { return grid * grid; }
  std::size_t token_input_dim() const { return pool * pool * 3; }
  std::size_t feature_dim() const { return embed_dim; }
};

struct HeadConfig {
  std::size_t hidden = 32;
  std::size_t bottleneck = 16;
  std::size_t prototypes = 64;
};

enum class Path { student, teacher };

nc::Tensor token_inputs(const slide::RgbImage& view, const EncoderConfig& cfg);

/// Encoder parameters under "enc.", heads under "dino_head." and "ibot_head.".
ParamSet init_params(const EncoderConfig& enc, const HeadConfig& head, std::uint64_t seed, bool requires_grad = true);

/// Degenerate encoder: depth 0, identity embedding (embed_dim == token_input_dim).
ParamSet identity_encoder_params(const EncoderConfig& enc);

BoundParams bind(nc::Tape& tape, ParamSet& params);

struct Encoded {
  nc::Var global;  // [1, feature_dim], unit norm
  nc::Var tokens;  // [tokens, feature_dim]
};

/// Masks are only legal on the student path.
Encoded encode(const EncoderConfig& cfg, const BoundParams& params, nc::Var token_input,
               const std::vector<bool>* token_mask = nullptr, Path path = Path::student);

/// 2-layer GELU MLP -> l2-normalize -> cosine against row-normalized prototypes.
nc::Var head_logits(const BoundParams& params, const std::string& prefix, nc::Var features);

/// Name of the prototype ("last layer") tensor of a head.
std::string prototype_name(const std::string& prefix);

}  // namespace porc::ssl
