// SPDX-License-Identifier: Apache-2.0
#include "gfr/losses.hpp"

#include <cmath>
#include <string>

#include "gfr/error.hpp"

namespace gfr {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

void same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

Var ones_column(Graph& g, std::size_t rows) { return g.constant(Tensor::full(rows, 1, 1.0)); }

// Mean over rows of per-row values (B x 1).
Var batch_mean(Var per_row) { return mean(per_row); }

Var scalar_const(Graph& g, double v) { return g.constant(Tensor::scalar(v)); }

void require_unit_interval(std::string_view op, const Tensor& x) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= 0.0 && x[i] <= 1.0)) {
      throw DomainError(std::string(op) + ": target entry " + std::to_string(i) + " = " +
                        std::to_string(x[i]) + " outside [0, 1]");
    }
  }
}

std::vector<std::size_t> one_index(std::size_t rows, std::size_t idx) {
  return std::vector<std::size_t>(rows, idx);
}

}  // namespace

void validate_soft_target(const SoftTarget& target) {
  const Tensor& p = target.probs;
  if (p.rank() != 2 || p.cols() != target.classes.size()) {
    throw DimensionError("soft target: probs " + to_string(p.shape()) + " vs " +
                         std::to_string(target.classes.size()) + " classes");
  }
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double s = 0.0;
    for (double v : p.row_span(r)) {
      if (!(v >= 0.0)) throw ContractError("soft target: negative probability");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) {
      throw ContractError("soft target: row " + std::to_string(r) + " sums to " +
                          std::to_string(s));
    }
  }
}

// ---- graph-level -----------------------------------------------------------

Var recon_bce(Var x, Var x_hat) {
  same_shape("recon_bce", x.value(), x_hat.value());
  require_unit_interval("recon_bce", x.value());
  Graph& g = *x.graph();
  Var one = scalar_const(g, 1.0);
  Var ll = x * log(x_hat) + (one - x) * log(one - x_hat);
  return neg(batch_mean(row_sum(ll)));
}

Var recon_bce_logits(Var x, Var logits) {
  same_shape("recon_bce_logits", x.value(), logits.value());
  require_unit_interval("recon_bce_logits", x.value());
  // -[x log s(l) + (1-x) log(1-s(l))] = softplus(l) - x l
  return batch_mean(row_sum(softplus(logits) - x * logits));
}

Var recon_mse(Var x, Var x_hat) {
  same_shape("recon_mse", x.value(), x_hat.value());
  return scale(batch_mean(row_sum(square(x - x_hat))), 0.5);
}

Var kl_standard(Var mu, Var logvar) {
  same_shape("kl_standard", mu.value(), logvar.value());
  Graph& g = *mu.graph();
  Var inner = scalar_const(g, 1.0) + logvar - square(mu) - exp(logvar);
  return scale(batch_mean(row_sum(inner)), -0.5);
}

Var kl_to_prior(Var mu, Var logvar, Var prior_mu, Var prior_log_std) {
  same_shape("kl_to_prior", mu.value(), logvar.value());
  same_shape("kl_to_prior", mu.value(), prior_mu.value());
  same_shape("kl_to_prior", mu.value(), prior_log_std.value());
  Graph& g = *mu.graph();
  Var inv_prior_var = exp(scale(prior_log_std, -2.0));
  Var inner = scale(prior_log_std, 2.0) - logvar - scalar_const(g, 1.0) +
              (exp(logvar) + square(mu - prior_mu)) * inv_prior_var;
  return scale(batch_mean(row_sum(inner)), 0.5);
}

Var kl_to_mixture_estimate(Var mu, Var logvar, const Tensor& eps, const Tensor& weights,
                           Var prior_mu, Var prior_log_std) {
  same_shape("kl_to_mixture_estimate", mu.value(), logvar.value());
  same_shape("kl_to_mixture_estimate", mu.value(), eps);
  same_shape("kl_to_mixture_estimate", prior_mu.value(), prior_log_std.value());
  const std::size_t batch = mu.value().rows();
  if (prior_mu.value().cols() != mu.value().cols() || weights.rows() != batch ||
      weights.cols() != prior_mu.value().rows()) {
    throw DimensionError("kl_to_mixture_estimate: posterior " + to_string(mu.value().shape()) +
                         ", prior " + to_string(prior_mu.value().shape()) + ", weights " +
                         to_string(weights.shape()));
  }
  Graph& g = *mu.graph();
  const double dim = static_cast<double>(mu.value().cols());

  Var z = reparameterize(mu, logvar, eps);

  // log N(z_b | m_k, s_k^2) = -1/2 [ D log 2pi + sum_j 2 ls_kj + (z_bj - m_kj)^2 / s_kj^2 ]
  // with the quadratic expanded so the B x K matrix comes out of two matmuls.
  Var inv_var = exp(scale(prior_log_std, -2.0));                         // K x D
  Var quad_z = matmul(square(z), transpose(inv_var));                    // B x K
  Var cross = matmul(z, transpose(prior_mu * inv_var));                  // B x K
  Var per_class = row_sum(square(prior_mu) * inv_var + scale(prior_log_std, 2.0));  // K x 1
  Var offset = matmul(ones_column(g, batch), transpose(per_class));      // B x K
  Var log_density = scale(quad_z - scale(cross, 2.0) + offset + scalar_const(g, dim * kLog2Pi),
                          -0.5);
  Var log_mixture = log_weighted_sum_exp(log_density, weights);          // B x 1

  // -H[q] = -1/2 sum_j (1 + log 2pi + logvar_j)
  Var neg_entropy = scale(row_sum(logvar) + scalar_const(g, dim * (1.0 + kLog2Pi)), -0.5);
  return batch_mean(neg_entropy - log_mixture);
}

Var class_ce(Var logits, std::span<const std::size_t> labels) {
  const Tensor& l = logits.value();
  if (l.rank() != 2 || labels.size() != l.rows()) {
    throw DimensionError("class_ce: logits " + to_string(l.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  Tensor onehot(l.shape());
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] >= l.cols()) {
      throw LookupError("class_ce: label " + std::to_string(labels[r]) + " outside " +
                        std::to_string(l.cols()) + " classes");
    }
    onehot(r, labels[r]) = 1.0;
  }
  Graph& g = *logits.graph();
  return neg(batch_mean(row_sum(g.constant(std::move(onehot)) *
                                log_softmax_with_temperature(logits, 1.0))));
}

Var distill_ce(Var logits, const Tensor& targets, double temperature) {
  if (!(temperature > 0.0)) {
    throw ContractError("distill: temperature must be > 0, got " + std::to_string(temperature));
  }
  same_shape("distill", logits.value(), targets);
  Graph& g = *logits.graph();
  Var ll = g.constant(targets) * log_softmax_with_temperature(logits, temperature);
  return scale(batch_mean(row_sum(ll)), -temperature * temperature);
}

Var posterior_match(Var mu, Var logvar, Var mu_ref, Var logvar_ref) {
  same_shape("posterior_match", mu.value(), mu_ref.value());
  same_shape("posterior_match", logvar.value(), logvar_ref.value());
  same_shape("posterior_match", mu.value(), logvar.value());
  Var dm = mu - stop_gradient(mu_ref);
  Var dl = logvar - stop_gradient(logvar_ref);
  return scale(batch_mean(row_sum(square(dm) + square(dl))), 0.5);
}

// ---- value-level -----------------------------------------------------------

double recon_loss(const Tensor& x, const Tensor& x_hat) {
  Graph g(false);
  return recon_bce(g.constant(x.as_matrix()), g.constant(x_hat.as_matrix())).value().item();
}

double latent_loss_standard(const Tensor& mu, const Tensor& logvar) {
  Graph g(false);
  return kl_standard(g.constant(mu.as_matrix()), g.constant(logvar.as_matrix())).value().item();
}

double latent_loss_hard(const Tensor& mu, const Tensor& logvar, int y,
                        const ClassPriorTable& prior) {
  prior.require_active(y);
  const Tensor m = mu.as_matrix();
  Graph g(false);
  const auto rows = one_index(m.rows(), static_cast<std::size_t>(y));
  Var pm = gather_rows(g.constant(prior.means), rows);
  Var pls = clamp(gather_rows(g.constant(prior.log_std), rows), kLogStdMin, kLogStdMax);
  return kl_to_prior(g.constant(m), g.constant(logvar.as_matrix()), pm, pls).value().item();
}

double latent_loss_soft(const Tensor& mu, const Tensor& logvar, const SoftTarget& target,
                        const ClassPriorTable& prior, Rng& rng) {
  validate_soft_target(target);
  const Tensor m = mu.as_matrix();
  if (target.probs.rows() != m.rows()) {
    throw DimensionError("latent_loss_soft: " + std::to_string(m.rows()) + " posteriors vs " +
                         std::to_string(target.probs.rows()) + " targets");
  }
  std::vector<std::size_t> classes;
  for (std::size_t k = 0; k < target.classes.size(); ++k) {
    const int c = target.classes[k];
    bool has_mass = false;
    for (std::size_t r = 0; r < target.probs.rows(); ++r) has_mass |= target.probs(r, k) > 0.0;
    if (has_mass) prior.require_active(c);
    classes.push_back(static_cast<std::size_t>(c));
  }
  Graph g(false);
  Var pm = gather_rows(g.constant(prior.means), classes);
  Var pls = clamp(gather_rows(g.constant(prior.log_std), classes), kLogStdMin, kLogStdMax);
  const Tensor eps = rng.normal_matrix(m.rows(), m.cols());
  return kl_to_mixture_estimate(g.constant(m), g.constant(logvar.as_matrix()), eps, target.probs,
                                pm, pls)
      .value()
      .item();
}

double class_loss(const Tensor& logits, int y) {
  const Tensor l = logits.as_matrix();
  if (y < 0) throw LookupError("class_loss: negative label");
  Graph g(false);
  return class_ce(g.constant(l), one_index(l.rows(), static_cast<std::size_t>(y))).value().item();
}

double distill_loss(const Tensor& logits, const Tensor& targets, double temperature) {
  Graph g(false);
  return distill_ce(g.constant(logits.as_matrix()), targets.as_matrix(), temperature)
      .value()
      .item();
}

double latent_match_loss(const Tensor& mu_orig, const Tensor& logvar_orig, const Tensor& mu_recon,
                         const Tensor& logvar_recon) {
  Graph g(false);
  return posterior_match(g.constant(mu_recon.as_matrix()), g.constant(logvar_recon.as_matrix()),
                         g.constant(mu_orig.as_matrix()), g.constant(logvar_orig.as_matrix()))
      .value()
      .item();
}

double latent_distill_loss(const Tensor& mu_new, const Tensor& logvar_new, const Tensor& mu_old,
                           const Tensor& logvar_old) {
  Graph g(false);
  return posterior_match(g.constant(mu_new.as_matrix()), g.constant(logvar_new.as_matrix()),
                         g.constant(mu_old.as_matrix()), g.constant(logvar_old.as_matrix()))
      .value()
      .item();
}

// ---- composition -----------------------------------------------------------

double LossReport::sum_of_terms() const {
  double s = 0.0;
  for (const auto* t : {&recon, &latent, &class_ce, &distill, &latent_match, &latent_distill}) {
    if (*t) s += **t;
  }
  return s;
}

namespace {

struct TermSpec {
  const char* name;
  double weight;
  bool required;
};

// Applies weights, enforces required terms and fills the report. `value`
// extracts a double from a term; `scaled` yields the weighted term.
template <class T, class Value>
void apply_terms(const std::vector<std::pair<TermSpec, const std::optional<T>*>>& terms,
                 const std::vector<std::optional<double>*>& slots, Value value,
                 std::vector<std::pair<double, T>>& kept) {
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const auto& [spec, term] = terms[i];
    if (!*term) {
      if (spec.required) {
        throw ContractError(std::string("loss composition: missing required term '") +
                            spec.name + "'");
      }
      continue;
    }
    if (spec.weight == 0.0) continue;
    const double v = spec.weight * value(**term);
    if (!std::isfinite(v)) {
      throw NumericError(std::string("loss term '") + spec.name + "' is not finite");
    }
    *slots[i] = v;
    kept.emplace_back(spec.weight, **term);
  }
}

}  // namespace

LossReport compose_current(const LossReport& raw, const LossWeights& w) {
  LossReport out;
  std::vector<std::pair<TermSpec, const std::optional<double>*>> terms{
      {{"recon", w.recon, true}, &raw.recon},
      {{"latent", w.latent, true}, &raw.latent},
      {{"class_ce", w.class_ce, true}, &raw.class_ce},
      {{"latent_match", w.latent_match, false}, &raw.latent_match}};
  std::vector<std::optional<double>*> slots{&out.recon, &out.latent, &out.class_ce,
                                            &out.latent_match};
  std::vector<std::pair<double, double>> kept;
  apply_terms(terms, slots, [](double v) { return v; }, kept);
  out.total = out.sum_of_terms();
  return out;
}

LossReport compose_replay(const LossReport& raw, const LossWeights& w) {
  LossReport out;
  std::vector<std::pair<TermSpec, const std::optional<double>*>> terms{
      {{"recon", w.recon, true}, &raw.recon},
      {{"latent", w.latent, true}, &raw.latent},
      {{"distill", w.distill, true}, &raw.distill},
      {{"latent_distill", w.latent_distill, false}, &raw.latent_distill}};
  std::vector<std::optional<double>*> slots{&out.recon, &out.latent, &out.distill,
                                            &out.latent_distill};
  std::vector<std::pair<double, double>> kept;
  apply_terms(terms, slots, [](double v) { return v; }, kept);
  out.total = out.sum_of_terms();
  return out;
}

LossReport compose_total(const LossReport& current, const std::optional<LossReport>& replay) {
  if (!replay) return current;
  LossReport out = current;
  auto merge = [](std::optional<double>& dst, const std::optional<double>& src) {
    if (src) dst = dst.value_or(0.0) + *src;
  };
  merge(out.recon, replay->recon);
  merge(out.latent, replay->latent);
  merge(out.class_ce, replay->class_ce);
  merge(out.distill, replay->distill);
  merge(out.latent_match, replay->latent_match);
  merge(out.latent_distill, replay->latent_distill);
  out.total = current.total + replay->total;
  return out;
}

namespace {

ComposedLoss compose_vars(const std::vector<std::pair<TermSpec, const std::optional<Var>*>>& terms,
                          LossReport& report,
                          const std::vector<std::optional<double>*>& slots) {
  std::vector<std::pair<double, Var>> kept;
  apply_terms(terms, slots, [](Var v) { return v.value().item(); }, kept);
  Var total;
  for (const auto& [weight, v] : kept) {
    Var term = weight == 1.0 ? v : scale(v, weight);
    total = total.valid() ? total + term : term;
  }
  report.total = report.sum_of_terms();
  return {total, report};
}

}  // namespace

ComposedLoss compose_current(const CurrentTerms& t, const LossWeights& w) {
  LossReport report;
  return compose_vars({{{"recon", w.recon, true}, &t.recon},
                       {{"latent", w.latent, true}, &t.latent},
                       {{"class_ce", w.class_ce, true}, &t.class_ce},
                       {{"latent_match", w.latent_match, false}, &t.latent_match}},
                      report, {&report.recon, &report.latent, &report.class_ce,
                               &report.latent_match});
}

ComposedLoss compose_replay(const ReplayTerms& t, const LossWeights& w) {
  LossReport report;
  return compose_vars({{{"recon", w.recon, true}, &t.recon},
                       {{"latent", w.latent, true}, &t.latent},
                       {{"distill", w.distill, true}, &t.distill},
                       {{"latent_distill", w.latent_distill, false}, &t.latent_distill}},
                      report, {&report.recon, &report.latent, &report.distill,
                               &report.latent_distill});
}

ComposedLoss compose_total(const ComposedLoss& current, const std::optional<ComposedLoss>& replay) {
  if (!replay) return current;
  ComposedLoss out;
  if (current.total.valid() && replay->total.valid()) {
    out.total = current.total + replay->total;
  } else {
    out.total = current.total.valid() ? current.total : replay->total;
  }
  out.report = compose_total(current.report, std::optional<LossReport>(replay->report));
  return out;
}

}  // namespace gfr
