// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "porc/harness/fixtures.hpp"
#include "porc/harness/registry.hpp"
#include "porc/ssl/trainer.hpp"

namespace porc::harness {

struct RunResult {
  int task_id = 0;
  std::map<std::string, double> metrics;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t fingerprint = 0;
};

nlohmann::json to_json(const RunResult& r);

struct Encoder {
  ssl::SslHyper hyper;
  ssl::SslState state;
};

/// Deterministic encoder used when no checkpoint is given.
Encoder default_encoder(std::uint64_t seed);

/// Column-wise z-scoring with statistics from `fit_rows` (zero-variance columns are only centered).
nc::Tensor standardize(const nc::Tensor& features, const std::vector<std::size_t>& fit_rows);

struct RunOptions {
  double ridge_lambda = 1.0;
};

/// Executes the task protocol on the fixture. The encoder is read only.
RunResult run_task(const TaskDescriptor& task, const Fixture& fixture, const Encoder& encoder, std::uint64_t seed,
                   const RunOptions& options = {});

struct Summary {
  std::vector<RunResult> results;  // sorted by task id
  std::map<std::string, std::map<std::string, double>> category_means;
  std::vector<int> missing;
};

Summary aggregate(const std::vector<RunResult>& results, const std::vector<TaskDescriptor>& registry);
/// scope,key,metric,value rows; excludes wall time so reruns compare byte-equal.
std::string summary_csv(const Summary& s);
nlohmann::json summary_json(const Summary& s);

struct SuiteOptions {
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::filesystem::path out_dir;
  std::vector<int> only;  // empty = all tasks
  FixtureOptions fixture;
  RunOptions run;
};

Summary run_suite(const std::vector<TaskDescriptor>& registry, const Encoder& encoder, const SuiteOptions& options);

}  // namespace porc::harness
