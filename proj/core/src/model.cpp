// SPDX-License-Identifier: Apache-2.0
#include "gfr/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "gfr/error.hpp"

namespace gfr {
namespace {

Linear init_linear(std::size_t in, std::size_t out, double gain, Rng& rng) {
  Linear layer{Tensor({in, out}), Tensor({1, out})};
  const double stddev = gain / std::sqrt(static_cast<double>(in));
  for (double& w : layer.weight.data()) w = stddev * rng.normal();
  return layer;
}

void require_cols(std::string_view what, const Tensor& x, std::size_t expected) {
  if (x.cols() != expected) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(expected) +
                         " columns, got shape " + to_string(x.shape()));
  }
}

std::vector<std::size_t> to_indices(std::span<const int> classes) {
  return {classes.begin(), classes.end()};
}

}  // namespace

// ---- ClassPriorTable -------------------------------------------------------

bool ClassPriorTable::is_active(int c) const {
  return c >= 0 && static_cast<std::size_t>(c) < active.size() && active[c] != 0;
}

std::vector<int> ClassPriorTable::active_classes() const {
  std::vector<int> out;
  for (std::size_t c = 0; c < active.size(); ++c) {
    if (active[c]) out.push_back(static_cast<int>(c));
  }
  return out;
}

double ClassPriorTable::class_weight(int c) const {
  if (!is_active(c)) return 0.0;
  const auto n = std::count(active.begin(), active.end(), std::uint8_t{1});
  return 1.0 / static_cast<double>(n);
}

void ClassPriorTable::activate(int c, double init_std, Rng& rng) {
  if (c < 0 || static_cast<std::size_t>(c) >= active.size()) {
    throw LookupError("class " + std::to_string(c) + " outside the prior table");
  }
  if (active[c]) return;
  for (double& v : means.row_span(c)) v = init_std * rng.normal();
  for (double& v : log_std.row_span(c)) v = 0.0;
  active[c] = 1;
}

void ClassPriorTable::require_active(int c) const {
  if (!is_active(c)) throw LookupError("class " + std::to_string(c) + " has not been seen");
}

// ---- ModelState ------------------------------------------------------------

std::vector<Tensor*> ModelState::parameters() {
  return {&encoder.hidden.weight, &encoder.hidden.bias, &encoder.out.weight, &encoder.out.bias,
          &decoder.hidden.weight, &decoder.hidden.bias, &decoder.out.weight, &decoder.out.bias,
          &classifier.out.weight, &classifier.out.bias, &prior.means,        &prior.log_std};
}

std::vector<const Tensor*> ModelState::parameters() const {
  auto ptrs = const_cast<ModelState*>(this)->parameters();
  return {ptrs.begin(), ptrs.end()};
}

std::uint64_t ModelState::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const Tensor* t : parameters()) feed(t->data().data(), t->size() * sizeof(double));
  feed(prior.active.data(), prior.active.size());
  return h;
}

void ModelState::add_classes(std::span<const int> classes, Rng& rng) {
  for (int c : classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= config.n_classes) {
      throw LookupError("class " + std::to_string(c) + " outside [0, " +
                        std::to_string(config.n_classes) + ")");
    }
    prior.activate(c, config.prior_mean_init_std, rng);
    if (!std::binary_search(seen.begin(), seen.end(), c)) {
      seen.insert(std::upper_bound(seen.begin(), seen.end(), c), c);
    }
  }
}

ModelState init_model(const ModelConfig& config, Rng& rng) {
  if (config.input_dim == 0 || config.latent_dim == 0 || config.hidden == 0 ||
      config.n_classes == 0) {
    throw ConfigError("model dimensions must all be positive");
  }
  const std::size_t n = config.input_dim, d = config.latent_dim, h = config.hidden;
  const double relu_gain = std::sqrt(2.0);
  ModelState s;
  s.config = config;
  s.encoder.hidden = init_linear(n, h, relu_gain, rng);
  s.encoder.out = init_linear(h, 2 * d, 1.0, rng);
  s.decoder.hidden = init_linear(d, h, relu_gain, rng);
  s.decoder.out = init_linear(h, n, 1.0, rng);
  s.decoder.sigmoid_output = config.sigmoid_output;
  s.classifier.out = init_linear(d, config.n_classes, 1.0, rng);
  s.prior.means = Tensor({config.n_classes, d});
  s.prior.log_std = Tensor({config.n_classes, d});
  s.prior.active.assign(config.n_classes, 0);
  return s;
}

// ---- graph-level -----------------------------------------------------------

std::vector<Var> ModelVars::all() const {
  return {enc_w1, enc_b1, enc_w2, enc_b2, dec_w1,      dec_b1,
          dec_w2, dec_b2, cls_w,  cls_b,  prior_means, prior_log_std};
}

ModelVars bind(Graph& graph, const ModelState& state, bool trainable) {
  auto leaf = [&](const Tensor& t) {
    return trainable ? graph.parameter(t) : graph.constant(t);
  };
  ModelVars v;
  v.enc_w1 = leaf(state.encoder.hidden.weight);
  v.enc_b1 = leaf(state.encoder.hidden.bias);
  v.enc_w2 = leaf(state.encoder.out.weight);
  v.enc_b2 = leaf(state.encoder.out.bias);
  v.dec_w1 = leaf(state.decoder.hidden.weight);
  v.dec_b1 = leaf(state.decoder.hidden.bias);
  v.dec_w2 = leaf(state.decoder.out.weight);
  v.dec_b2 = leaf(state.decoder.out.bias);
  v.cls_w = leaf(state.classifier.out.weight);
  v.cls_b = leaf(state.classifier.out.bias);
  v.prior_means = leaf(state.prior.means);
  v.prior_log_std = leaf(state.prior.log_std);
  v.latent_dim = state.config.latent_dim;
  v.sigmoid_output = state.decoder.sigmoid_output;
  return v;
}

Var affine(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("affine: input must be a matrix");
  Var ones = x.graph()->constant(Tensor::full(xv.rows(), 1, 1.0));
  return matmul(x, weight) + matmul(ones, bias);
}

Posterior encode(const ModelVars& vars, Var x) {
  require_cols("encode", x.value(), vars.enc_w1.value().rows());
  Var h = relu(affine(x, vars.enc_w1, vars.enc_b1));
  Var out = affine(h, vars.enc_w2, vars.enc_b2);
  const std::size_t d = vars.latent_dim;
  return {slice_cols(out, 0, d), clamp(slice_cols(out, d, 2 * d), kLogVarMin, kLogVarMax)};
}

Var decode_logits(const ModelVars& vars, Var z) {
  require_cols("decode", z.value(), vars.latent_dim);
  Var h = relu(affine(z, vars.dec_w1, vars.dec_b1));
  return affine(h, vars.dec_w2, vars.dec_b2);
}

Var decode(const ModelVars& vars, Var z) {
  Var out = decode_logits(vars, z);
  return vars.sigmoid_output ? sigmoid(out) : out;
}

Var class_logits(const ModelVars& vars, Var z) {
  require_cols("classify", z.value(), vars.latent_dim);
  return affine(z, vars.cls_w, vars.cls_b);
}

Var reparameterize(Var mu, Var logvar, const Tensor& eps) {
  Graph& g = *mu.graph();
  Var sigma = exp(scale(logvar, 0.5));
  return mu + sigma * g.constant(eps);
}

std::pair<Var, Var> prior_rows(const ModelVars& vars, std::span<const std::size_t> classes) {
  return {gather_rows(vars.prior_means, classes),
          clamp(gather_rows(vars.prior_log_std, classes), kLogStdMin, kLogStdMax)};
}

// ---- value-level -----------------------------------------------------------

PosteriorParams encode(const Tensor& x, const EncoderParams& encoder) {
  Graph g(false);
  ModelVars v;
  v.enc_w1 = g.constant(encoder.hidden.weight);
  v.enc_b1 = g.constant(encoder.hidden.bias);
  v.enc_w2 = g.constant(encoder.out.weight);
  v.enc_b2 = g.constant(encoder.out.bias);
  v.latent_dim = encoder.out.weight.cols() / 2;
  Posterior p = encode(v, g.constant(x.as_matrix()));
  return {p.mu.value(), p.logvar.value()};
}

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, Rng& rng) {
  if (mu.shape() != logvar.shape()) {
    throw DimensionError("reparameterize: " + to_string(mu.shape()) + " vs " +
                         to_string(logvar.shape()));
  }
  Tensor z(mu.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double lv = std::clamp(logvar[i], kLogVarMin, kLogVarMax);
    z[i] = mu[i] + std::exp(0.5 * lv) * rng.normal();
  }
  return z;
}

Tensor decode(const Tensor& z, const DecoderParams& decoder) {
  Graph g(false);
  ModelVars v;
  v.dec_w1 = g.constant(decoder.hidden.weight);
  v.dec_b1 = g.constant(decoder.hidden.bias);
  v.dec_w2 = g.constant(decoder.out.weight);
  v.dec_b2 = g.constant(decoder.out.bias);
  v.latent_dim = decoder.hidden.weight.rows();
  v.sigmoid_output = decoder.sigmoid_output;
  return decode(v, g.constant(z.as_matrix())).value();
}

Tensor logits(const Tensor& z, const ClassifierParams& classifier) {
  Graph g(false);
  ModelVars v;
  v.cls_w = g.constant(classifier.out.weight);
  v.cls_b = g.constant(classifier.out.bias);
  v.latent_dim = classifier.out.weight.rows();
  return class_logits(v, g.constant(z.as_matrix())).value();
}

Tensor classify(const Tensor& z, const ClassifierParams& classifier, std::span<const int> seen) {
  if (seen.empty()) throw ContractError("classify: no classes seen yet");
  const Tensor all = logits(z, classifier);
  for (int c : seen) {
    if (c < 0 || static_cast<std::size_t>(c) >= all.cols()) {
      throw LookupError("classify: class " + std::to_string(c) + " has no logit");
    }
  }
  Graph g(false);
  const auto cols = to_indices(seen);
  const Tensor probs = softmax_with_temperature(select_cols(g.constant(all), cols), 1.0).value();
  Tensor out(all.shape());
  for (std::size_t r = 0; r < all.rows(); ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) out(r, cols[j]) = probs(r, j);
  }
  return out;
}

Tensor sample_conditional_prior(int c, const ClassPriorTable& prior, Rng& rng) {
  prior.require_active(c);
  auto mu = prior.means.row_span(c);
  auto log_std = prior.log_std.row_span(c);
  Tensor z({mu.size()});
  for (std::size_t j = 0; j < mu.size(); ++j) {
    z[j] = mu[j] + std::exp(std::clamp(log_std[j], kLogStdMin, kLogStdMax)) * rng.normal();
  }
  return z;
}

std::vector<int> predict(const ModelState& state, const Tensor& x) {
  const Tensor probs = classify(encode(x, state.encoder).mu, state.classifier, state.seen);
  std::vector<int> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    int best = state.seen.front();
    for (int c : state.seen) {
      if (probs(r, c) > probs(r, best)) best = c;
    }
    out[r] = best;
  }
  return out;
}

}  // namespace gfr
