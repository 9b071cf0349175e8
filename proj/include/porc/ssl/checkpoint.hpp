// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <vector>

#include "porc/numeric/tensor.hpp"
#include "porc/ssl/trainer.hpp"

namespace porc::ssl {

/// Training state plus the hyperparameters it was produced with.
struct Checkpoint {
  SslHyper hyper;
  SslState state;
};

// Checkpoint file: "POCK", u32 version, u32 json length, json header,
// u32 tensor count, then per tensor: name, rank, dims, f64 values.
std::vector<std::uint8_t> serialize_checkpoint(const SslHyper& hyper, const SslState& state);
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const SslHyper& hyper, const SslState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Feature file: "FEAT", u32 rows, u32 dim, f32 values row-major.
void save_features(const std::filesystem::path& path, const nc::Tensor& features);
nc::Tensor load_features(const std::filesystem::path& path);

}  // namespace porc::ssl
