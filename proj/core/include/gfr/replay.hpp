// SPDX-License-Identifier: Apache-2.0
//
// Rehearsal batches drawn from the frozen previous-task model.
//
//   generate      class c uniform over old classes, z ~ N(mu^c, sigma^c^2),
//                 features = decode(z)
//   cycle         features <- decode(encode_mean(features)), n times
//   soft_targets  softmax(old logits / T) over old classes, plus the old
//                 posterior (mu, logvar) for latent distillation
//
// Targets and cached posteriors are computed after cycling. Every function
// takes the old model by const reference; none of them mutate it.
#pragma once

#include <span>
#include <vector>

#include "gfr/losses.hpp"
#include "gfr/model.hpp"
#include "gfr/rng.hpp"

namespace gfr {

struct GeneratedFeatures {
  Tensor features;          // B x N
  std::vector<int> classes; // prior component each row was drawn from
};

struct OldModelView {
  SoftTarget targets;  // over the old model's seen classes
  Tensor mu;           // B x D, old encoder posterior
  Tensor logvar;
};

struct ReplayBatch {
  Tensor features;               // B x N, after cycling
  SoftTarget targets;
  Tensor old_mu;
  Tensor old_logvar;
  std::vector<int> source_classes;
  int cycles_applied = 0;

  std::size_t size() const { return source_classes.size(); }
};

struct ReplayConfig {
  std::size_t batch_size = 64;
  int n_cycles = 0;
  double temperature = 2.0;
};

GeneratedFeatures generate(const ModelState& old, std::span<const int> classes, std::size_t batch,
                           Rng& rng);

/// Posterior-mean round trips through the old encoder and decoder.
/// n_cycles = 0 returns the input unchanged.
Tensor cycle(const Tensor& features, const ModelState& old, int n_cycles);

OldModelView soft_targets(const Tensor& features, const ModelState& old, double temperature);

/// generate -> cycle -> soft_targets over all classes `old` has seen.
ReplayBatch build_replay_batch(const ModelState& old, const ReplayConfig& config, Rng& rng);

/// Posterior means (under `model`) of n generated-and-cycled features.
Tensor generated_latents(const ModelState& model, std::size_t n, int n_cycles, Rng& rng);

}  // namespace gfr
