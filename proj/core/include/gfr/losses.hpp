// SPDX-License-Identifier: Apache-2.0
//
// Loss terms of the replay objective. Every term is a quantity to MINIMIZE:
// terms usually written in ELBO (maximization) form are negated here. Batch
// reduction is always: sum over feature/latent dimensions, mean over rows.
//
// Graph-level functions take Vars and are what the trainer differentiates.
// Value-level overloads take tensors (rank 1 = one sample, rank 2 = batch)
// and run the same code on an untraced graph.
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gfr/autodiff.hpp"
#include "gfr/model.hpp"
#include "gfr/rng.hpp"

namespace gfr {

/// Temperature-softened class distribution produced by a previous model.
/// `probs` is B x K over `classes` (K ids, all previously seen).
struct SoftTarget {
  Tensor probs;
  std::vector<int> classes;
  double temperature = 1.0;
};

/// Throws ContractError unless every row is >= 0 and sums to 1 within 1e-9.
void validate_soft_target(const SoftTarget& target);

// ---- graph-level -----------------------------------------------------------

/// Binary cross-entropy, x in [0,1] (DomainError otherwise), x_hat in (0,1).
Var recon_bce(Var x, Var x_hat);
/// Same quantity computed from decoder logits (x_hat = sigmoid(logits)).
Var recon_bce_logits(Var x, Var logits);
/// 0.5 * squared error; used when features are not mapped into [0,1].
Var recon_mse(Var x, Var x_hat);

/// KL(N(mu, exp(logvar)) || N(0, I)).
Var kl_standard(Var mu, Var logvar);
/// KL(N(mu, exp(logvar)) || N(prior_mu, exp(2 prior_log_std))), row-aligned.
Var kl_to_prior(Var mu, Var logvar, Var prior_mu, Var prior_log_std);
/// Single-sample estimate of KL(q || sum_k w_k N(m_k, s_k^2)):
///   -H[q] - log sum_k w_k N(z | m_k, s_k^2),  z = mu + exp(logvar/2) eps.
/// weights is B x K, prior_mu / prior_log_std are K x D.
Var kl_to_mixture_estimate(Var mu, Var logvar, const Tensor& eps, const Tensor& weights,
                           Var prior_mu, Var prior_log_std);
/// Cross-entropy; labels index the columns of `logits`.
Var class_ce(Var logits, std::span<const std::size_t> labels);
/// -T^2 sum_c y_c log softmax(logits / T)_c, mean over rows.
Var distill_ce(Var logits, const Tensor& targets, double temperature);
/// 0.5 |mu - mu_ref|^2 + 0.5 |logvar - logvar_ref|^2, mean over rows. No
/// gradient reaches the reference pair.
Var posterior_match(Var mu, Var logvar, Var mu_ref, Var logvar_ref);

// ---- value-level -----------------------------------------------------------

double recon_loss(const Tensor& x, const Tensor& x_hat);
double latent_loss_standard(const Tensor& mu, const Tensor& logvar);
double latent_loss_hard(const Tensor& mu, const Tensor& logvar, int y,
                        const ClassPriorTable& prior);
double latent_loss_soft(const Tensor& mu, const Tensor& logvar, const SoftTarget& target,
                        const ClassPriorTable& prior, Rng& rng);
/// `logits` over K classes, y in [0, K).
double class_loss(const Tensor& logits, int y);
double distill_loss(const Tensor& logits, const Tensor& targets, double temperature);
double latent_match_loss(const Tensor& mu_orig, const Tensor& logvar_orig, const Tensor& mu_recon,
                         const Tensor& logvar_recon);
double latent_distill_loss(const Tensor& mu_new, const Tensor& logvar_new, const Tensor& mu_old,
                           const Tensor& logvar_old);

// ---- composition -----------------------------------------------------------

/// Per-term contributions of one batch (already multiplied by their weight).
/// Absent terms were not computed for this batch kind.
struct LossReport {
  std::optional<double> recon;
  std::optional<double> latent;
  std::optional<double> class_ce;
  std::optional<double> distill;
  std::optional<double> latent_match;
  std::optional<double> latent_distill;
  double total = 0.0;

  double sum_of_terms() const;
};

/// Multipliers on each term. All 1.0 reproduces the unweighted objective; a
/// zero weight drops the term (it is then absent from the report).
struct LossWeights {
  double recon = 1.0;
  double latent = 1.0;
  double class_ce = 1.0;
  double distill = 1.0;
  double latent_match = 1.0;
  double latent_distill = 1.0;
};

/// current = recon + latent + class_ce [+ latent_match]
LossReport compose_current(const LossReport& raw, const LossWeights& weights = {});
/// replay = recon + latent + distill [+ latent_distill]
LossReport compose_replay(const LossReport& raw, const LossWeights& weights = {});
/// total = current + replay, terms of the same name added together.
LossReport compose_total(const LossReport& current, const std::optional<LossReport>& replay);

struct CurrentTerms {
  std::optional<Var> recon, latent, class_ce, latent_match;
};
struct ReplayTerms {
  std::optional<Var> recon, latent, distill, latent_distill;
};
struct ComposedLoss {
  Var total;
  LossReport report;
};

ComposedLoss compose_current(const CurrentTerms& terms, const LossWeights& weights = {});
ComposedLoss compose_replay(const ReplayTerms& terms, const LossWeights& weights = {});
ComposedLoss compose_total(const ComposedLoss& current, const std::optional<ComposedLoss>& replay);

}  // namespace gfr
