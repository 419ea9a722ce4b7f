// SPDX-License-Identifier: Apache-2.0
//
// Symmetric VAE over feature vectors with a classifier on the latent code and
// a trainable class-conditional Gaussian prior.
//
//   encoder     N -> H -> 2D   (mu | log variance), relu hidden layer
//   decoder     D -> H -> N    sigmoid output
//   classifier  D -> C         linear, logits for every scenario class
//   prior       per class c: mean mu^c and log std, diagonal
//
// Parameters live in plain tensors owned by ModelState. Training binds them
// into a Graph (see bind()); the value-level functions below run the same
// code on an untraced graph.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gfr/autodiff.hpp"
#include "gfr/rng.hpp"
#include "gfr/tensor.hpp"

namespace gfr {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;
// Prior log std shares the posterior's clamp: log sigma in [-5, 5].
inline constexpr double kLogStdMin = kLogVarMin / 2;
inline constexpr double kLogStdMax = kLogVarMax / 2;

struct ModelConfig {
  std::size_t input_dim = 0;   // N, taken from the dataset
  std::size_t latent_dim = 64; // D
  std::size_t hidden = 256;    // H
  std::size_t n_classes = 0;   // C, every class of the scenario
  double prior_mean_init_std = 0.1;
  /// Sigmoid decoder output for [0,1] features; linear for raw features.
  bool sigmoid_output = true;
};

/// y = x W + b, W is in x out, b is 1 x out.
struct Linear {
  Tensor weight;
  Tensor bias;
};

struct EncoderParams {
  Linear hidden;
  Linear out;  // H -> 2D, first D columns are mu
};

struct DecoderParams {
  Linear hidden;
  Linear out;
  bool sigmoid_output = true;  // mirrors ModelConfig::sigmoid_output
};

struct ClassifierParams {
  Linear out;
};

/// Trainable mean and log std per class. Rows of classes that are not active
/// hold zeros and must not be read.
struct ClassPriorTable {
  Tensor means;    // C x D
  Tensor log_std;  // C x D
  std::vector<std::uint8_t> active;

  std::size_t n_classes() const { return active.size(); }
  bool is_active(int c) const;
  std::vector<int> active_classes() const;
  /// Uniform p(Y = c) over active classes; 0 for inactive ones.
  double class_weight(int c) const;
  /// Draws mu^c ~ N(0, init_std^2) and sets log sigma^c = 0.
  void activate(int c, double init_std, Rng& rng);
  /// Throws LookupError unless c is active.
  void require_active(int c) const;
};

struct ModelState {
  ModelConfig config;
  EncoderParams encoder;
  DecoderParams decoder;
  ClassifierParams classifier;
  ClassPriorTable prior;
  std::vector<int> seen;  // sorted class ids
  int task = 0;

  /// Every trainable tensor, in a fixed order.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  /// FNV-1a over the bit patterns of every parameter.
  std::uint64_t checksum() const;

  /// Marks classes as seen and activates their prior rows.
  void add_classes(std::span<const int> classes, Rng& rng);
};

ModelState init_model(const ModelConfig& config, Rng& rng);

// ---- graph-level -----------------------------------------------------------

/// Model parameters bound as graph leaves.
struct ModelVars {
  Var enc_w1, enc_b1, enc_w2, enc_b2;
  Var dec_w1, dec_b1, dec_w2, dec_b2;
  Var cls_w, cls_b;
  Var prior_means, prior_log_std;
  std::size_t latent_dim = 0;
  bool sigmoid_output = true;

  /// Same order as ModelState::parameters().
  std::vector<Var> all() const;
};

/// Binds `state` into `graph`; parameters when trainable, constants otherwise.
ModelVars bind(Graph& graph, const ModelState& state, bool trainable);

struct Posterior {
  Var mu;
  Var logvar;  // clamped to [kLogVarMin, kLogVarMax]
};

Var affine(Var x, Var weight, Var bias);
Posterior encode(const ModelVars& vars, Var x);
Var decode_logits(const ModelVars& vars, Var z);
/// sigmoid(logits), or the logits themselves for a linear-output decoder.
Var decode(const ModelVars& vars, Var z);
Var class_logits(const ModelVars& vars, Var z);
/// z = mu + exp(logvar / 2) * eps.
Var reparameterize(Var mu, Var logvar, const Tensor& eps);
/// Prior mean and clamped log std rows for `classes`.
std::pair<Var, Var> prior_rows(const ModelVars& vars, std::span<const std::size_t> classes);

// ---- value-level -----------------------------------------------------------
//
// Batch inputs are B x dim matrices; a rank-1 input is treated as one row.

struct PosteriorParams {
  Tensor mu;
  Tensor logvar;
};

PosteriorParams encode(const Tensor& x, const EncoderParams& encoder);
Tensor reparameterize(const Tensor& mu, const Tensor& logvar, Rng& rng);
Tensor decode(const Tensor& z, const DecoderParams& decoder);
/// Logits for all classes.
Tensor logits(const Tensor& z, const ClassifierParams& classifier);
/// Probabilities over all classes; unseen classes get exactly 0.
Tensor classify(const Tensor& z, const ClassifierParams& classifier, std::span<const int> seen);
/// One draw z = mu^c + sigma^c * eps (length D). Reads only row c.
Tensor sample_conditional_prior(int c, const ClassPriorTable& prior, Rng& rng);
/// Class-IL prediction: argmax over seen classes of classify(mu(x)).
std::vector<int> predict(const ModelState& state, const Tensor& x);

}  // namespace gfr
