// SPDX-License-Identifier: Apache-2.0
#include "gfr/replay.hpp"

#include <string>

#include "gfr/error.hpp"

namespace gfr {

GeneratedFeatures generate(const ModelState& old, std::span<const int> classes, std::size_t batch,
                           Rng& rng) {
  if (classes.empty()) throw ContractError("generate: no classes to replay");
  for (int c : classes) old.prior.require_active(c);
  const std::size_t d = old.config.latent_dim;
  GeneratedFeatures out;
  if (batch == 0) {
    out.features = Tensor({0, old.config.input_dim});
    return out;
  }
  Tensor z({batch, d});
  out.classes.resize(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const int c = classes[rng.index(classes.size())];
    out.classes[b] = c;
    const Tensor sample = sample_conditional_prior(c, old.prior, rng);
    std::copy(sample.data().begin(), sample.data().end(), z.row_span(b).begin());
  }
  out.features = decode(z, old.decoder);
  return out;
}

Tensor cycle(const Tensor& features, const ModelState& old, int n_cycles) {
  if (n_cycles < 0) throw ContractError("cycle: n_cycles must be >= 0");
  Tensor x = features;
  if (x.size() == 0) return x;
  for (int k = 0; k < n_cycles; ++k) x = decode(encode(x, old.encoder).mu, old.decoder);
  return x;
}

OldModelView soft_targets(const Tensor& features, const ModelState& old, double temperature) {
  if (old.seen.empty()) throw ContractError("soft_targets: old model has seen no classes");
  OldModelView view;
  view.targets.classes = old.seen;
  view.targets.temperature = temperature;
  if (features.size() == 0) {
    view.targets.probs = Tensor({0, old.seen.size()});
    view.mu = Tensor({0, old.config.latent_dim});
    view.logvar = view.mu;
    return view;
  }
  PosteriorParams post = encode(features, old.encoder);
  const Tensor all_logits = logits(post.mu, old.classifier);
  Graph g(false);
  const std::vector<std::size_t> cols(old.seen.begin(), old.seen.end());
  view.targets.probs =
      softmax_with_temperature(select_cols(g.constant(all_logits), cols), temperature).value();
  view.mu = std::move(post.mu);
  view.logvar = std::move(post.logvar);
  return view;
}

ReplayBatch build_replay_batch(const ModelState& old, const ReplayConfig& config, Rng& rng) {
  GeneratedFeatures gen = generate(old, old.seen, config.batch_size, rng);
  ReplayBatch batch;
  batch.features = cycle(gen.features, old, config.n_cycles);
  batch.cycles_applied = config.n_cycles;
  OldModelView view = soft_targets(batch.features, old, config.temperature);
  batch.targets = std::move(view.targets);
  batch.old_mu = std::move(view.mu);
  batch.old_logvar = std::move(view.logvar);
  batch.source_classes = std::move(gen.classes);
  return batch;
}

Tensor generated_latents(const ModelState& model, std::size_t n, int n_cycles, Rng& rng) {
  GeneratedFeatures gen = generate(model, model.seen, n, rng);
  return encode(cycle(gen.features, model, n_cycles), model.encoder).mu;
}

}  // namespace gfr
