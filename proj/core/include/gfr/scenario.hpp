// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

#include "gfr/adam.hpp"
#include "gfr/losses.hpp"
#include "gfr/model.hpp"

namespace gfr {

enum class ReconKind {
  Bce,  // features normalized into [0, 1], sigmoid decoder output
  Mse,  // raw features, Gaussian reconstruction loss
};

/// What to measure at each task boundary besides accuracy.
struct EvalOptions {
  bool frechet = false;
  bool prd = false;
  std::size_t prd_clusters = 20;
  std::size_t prd_grid = 1001;
  /// Generated latents drawn per boundary for FD / PRD (0 = match the
  /// number of real test samples).
  std::size_t generated_samples = 0;
  /// > 0: project real and generated latents onto this many principal
  /// components of the real ones.
  std::size_t pca_components = 0;
};

/// Class-incremental scenario: a first task with `first_task_classes`
/// classes followed by `incremental_tasks` equally sized tasks.
struct ScenarioConfig {
  std::size_t total_classes = 100;
  std::size_t first_task_classes = 50;
  std::size_t incremental_tasks = 5;

  int first_task_iterations = 10000;
  int later_task_iterations = 5000;
  std::size_t batch_size = 64;

  bool replay = true;  // false: finetune baseline
  int n_cycles = 0;
  double temperature = 2.0;
  LossWeights weights;
  AdamConfig adam;
  ReconKind recon = ReconKind::Bce;

  /// latent_dim / hidden are used; input_dim and n_classes come from data.
  ModelConfig model;
  EvalOptions eval;
  std::uint64_t seed = 0;

  std::size_t task_count() const { return 1 + incremental_tasks; }
  std::size_t classes_per_incremental_task() const;
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

}  // namespace gfr
