// SPDX-License-Identifier: Apache-2.0
#include "gfr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gfr/adam.hpp"
#include "gfr/autodiff.hpp"
#include "gfr/replay.hpp"

namespace gfr {
namespace {

/// Epoch-based sampler: a seeded permutation consumed batch by batch,
/// reshuffled whenever it runs out.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch) : order_(n), batch_(std::min(batch, n)) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
  }

  std::vector<std::size_t> next(Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(batch_);
    while (out.size() < batch_) {
      if (cursor_ == 0) shuffle(rng);
      out.push_back(order_[cursor_]);
      cursor_ = (cursor_ + 1) % order_.size();
    }
    return out;
  }

 private:
  void shuffle(Rng& rng) {
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.index(i)]);
  }

  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t cursor_ = 0;
};

std::vector<std::size_t> as_indices(std::span<const int> classes) {
  return {classes.begin(), classes.end()};
}

/// Position of each label within the sorted `seen` list.
std::vector<std::size_t> seen_positions(std::span<const int> labels, std::span<const int> seen) {
  std::vector<std::size_t> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::lower_bound(seen.begin(), seen.end(), labels[i]);
    if (it == seen.end() || *it != labels[i]) {
      throw LookupError("training label " + std::to_string(labels[i]) + " has not been seen");
    }
    out[i] = static_cast<std::size_t>(it - seen.begin());
  }
  return out;
}

/// Soft targets over `target.classes` re-laid out over `seen` (a superset),
/// zero elsewhere.
Tensor pad_targets(const SoftTarget& target, std::span<const int> seen) {
  const auto pos = seen_positions(target.classes, seen);
  Tensor out({target.probs.rows(), seen.size()});
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t k = 0; k < pos.size(); ++k) out(r, pos[k]) = target.probs(r, k);
  }
  return out;
}

Var reconstruction(ReconKind kind, Var x, const ModelVars& vars, Var z) {
  Var out = decode_logits(vars, z);
  return kind == ReconKind::Bce ? recon_bce_logits(x, out) : recon_mse(x, out);
}

struct StepResult {
  Var total;
  LossReport report;
};

/// Builds the whole objective for one iteration. `raw` collects unweighted
/// term values as they are computed, for diagnostics on abort.
StepResult build_objective(Graph& g, const ModelVars& vars, const ModelState& state,
                           const Tensor& x_batch, std::span<const int> y_batch,
                           const ModelState* old, const ScenarioConfig& config, Rng& rng,
                           LossReport& raw) {
  const LossWeights& w = config.weights;
  const std::size_t d = state.config.latent_dim;
  const auto seen_cols = as_indices(state.seen);

  // Current-task batch.
  Var x = g.constant(x_batch);
  Posterior post = encode(vars, x);
  Var z = reparameterize(post.mu, post.logvar, rng.normal_matrix(x_batch.rows(), d));

  CurrentTerms cur;
  cur.recon = reconstruction(config.recon, x, vars, z);
  raw.recon = cur.recon->value().item();

  const auto label_rows = as_indices(y_batch);
  auto [prior_mu, prior_log_std] = prior_rows(vars, label_rows);
  cur.latent = kl_to_prior(post.mu, post.logvar, prior_mu, prior_log_std);
  raw.latent = cur.latent->value().item();

  const auto positions = seen_positions(y_batch, state.seen);
  cur.class_ce = class_ce(select_cols(class_logits(vars, z), seen_cols), positions);
  raw.class_ce = cur.class_ce->value().item();

  if (w.latent_match != 0.0) {
    Posterior again = encode(vars, decode(vars, z));
    cur.latent_match = posterior_match(again.mu, again.logvar, post.mu, post.logvar);
    raw.latent_match = cur.latent_match->value().item();
  }
  ComposedLoss current = compose_current(cur, w);

  std::optional<ComposedLoss> replay;
  if (old != nullptr && config.replay) {
    const ReplayConfig rc{config.batch_size, config.n_cycles, config.temperature};
    ReplayBatch rb = build_replay_batch(*old, rc, rng);
    const auto old_cols = as_indices(old->seen);

    Var xr = g.constant(rb.features);
    Posterior pr = encode(vars, xr);
    const Tensor eps = rng.normal_matrix(rb.size(), d);
    Var zr = reparameterize(pr.mu, pr.logvar, eps);

    ReplayTerms rep;
    rep.recon = reconstruction(config.recon, xr, vars, zr);
    raw.recon = *raw.recon + rep.recon->value().item();

    auto [mix_mu, mix_log_std] = prior_rows(vars, old_cols);
    rep.latent = kl_to_mixture_estimate(pr.mu, pr.logvar, eps, rb.targets.probs, mix_mu,
                                        mix_log_std);
    raw.latent = *raw.latent + rep.latent->value().item();

    // The student softmax spans every class the current model knows; classes
    // the old model never saw get zero target mass, so replayed samples also
    // push down the logits of the new classes.
    rep.distill = distill_ce(select_cols(class_logits(vars, zr), seen_cols),
                             pad_targets(rb.targets, state.seen), config.temperature);
    raw.distill = rep.distill->value().item();

    if (w.latent_distill != 0.0) {
      rep.latent_distill =
          posterior_match(pr.mu, pr.logvar, g.constant(rb.old_mu), g.constant(rb.old_logvar));
      raw.latent_distill = rep.latent_distill->value().item();
    }
    replay = compose_replay(rep, w);
  }

  ComposedLoss total = compose_total(current, replay);
  return {total.total, total.report};
}

std::string describe(const LossReport& r) {
  std::string out;
  auto add = [&out](const char* name, const std::optional<double>& v) {
    if (!v) return;
    if (!out.empty()) out += ", ";
    out += std::string(name) + "=" + std::to_string(*v);
  };
  add("recon", r.recon);
  add("latent", r.latent);
  add("class_ce", r.class_ce);
  add("distill", r.distill);
  add("latent_match", r.latent_match);
  add("latent_distill", r.latent_distill);
  return out.empty() ? "no terms computed" : out;
}

}  // namespace

double RunLog::average_incremental_accuracy() const {
  if (metrics.empty()) return 0.0;
  double s = 0.0;
  for (const MetricRecord& m : metrics) s += m.average_accuracy;
  return s / static_cast<double>(metrics.size());
}

TaskData task_data(const FeatureDataset& dataset, std::span<const std::size_t> indices) {
  TaskData out;
  out.features = take_rows(dataset.features, indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(dataset.labels[i]);
  return out;
}

void train_task(ModelState& state, const TaskData& data, const ModelState* old,
                const ScenarioConfig& config, int iterations, Rng& rng, RunLog* log,
                RunObserver* observer) {
  if (iterations < 0) throw ContractError("train_task: iterations must be >= 0");
  if (data.size() == 0) throw ContractError("train_task: task data is empty");
  if (data.features.rank() != 2 || data.features.rows() != data.size()) {
    throw DimensionError("train_task: features " + to_string(data.features.shape()) + " vs " +
                         std::to_string(data.size()) + " labels");
  }
  if (state.seen.empty()) throw ContractError("train_task: model has no active classes");
  if (iterations == 0) return;

  std::vector<Tensor*> params = state.parameters();
  AdamState adam(config.adam, std::vector<const Tensor*>(params.begin(), params.end()));
  BatchSampler sampler(data.size(), config.batch_size);
  std::vector<Tensor> grads(params.size());
  std::int64_t global = log != nullptr && !log->losses.empty() ? log->losses.back().global_iteration
                                                               : 0;

  for (int it = 0; it < iterations; ++it) {
    const auto idx = sampler.next(rng);
    const Tensor x = take_rows(data.features, idx);
    std::vector<int> y(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) y[i] = data.labels[idx[i]];

    LossReport raw;
    Graph g;
    const ModelVars vars = bind(g, state, /*trainable=*/true);
    StepResult step;
    try {
      step = build_objective(g, vars, state, x, y, old, config, rng, raw);
      if (!std::isfinite(step.report.total)) throw NumericError("total loss is not finite");
      g.backward(step.total);
    } catch (const NumericError& e) {
      throw TrainingAborted("task " + std::to_string(state.task) + ", iteration " +
                                std::to_string(it) + ": " + e.what() + " [" + describe(raw) + "]",
                            raw, state.task, it);
    }

    const std::vector<Var> leaves = vars.all();
    for (std::size_t i = 0; i < leaves.size(); ++i) grads[i] = leaves[i].grad();
    adam_step(params, grads, adam);

    IterationLog entry{state.task, it, ++global, std::move(step.report)};
    if (observer != nullptr) observer->on_iteration(entry);
    if (log != nullptr) log->losses.push_back(std::move(entry));
  }
}

MetricRecord evaluate(const ModelState& state, std::span<const TaskData> tests) {
  if (tests.empty()) throw ContractError("evaluate: no test splits");
  MetricRecord rec;
  rec.task = state.task;
  for (std::size_t t = 0; t < tests.size(); ++t) {
    const TaskData& test = tests[t];
    if (test.size() == 0) {
      throw ContractError("evaluate: test split of task " + std::to_string(t + 1) + " is empty");
    }
    const std::vector<int> pred = predict(state, test.features);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test.labels[i];
    rec.task_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(test.size()));
  }
  rec.average_accuracy =
      std::accumulate(rec.task_accuracy.begin(), rec.task_accuracy.end(), 0.0) /
      static_cast<double>(rec.task_accuracy.size());
  return rec;
}

RunLog run_scenario(const ScenarioConfig& config, const FeatureDataset& input,
                    RunObserver* observer) {
  config.validate();
  if (input.n_classes != config.total_classes) {
    throw ConfigError("total_classes: scenario has " + std::to_string(config.total_classes) +
                      " classes but the dataset has " + std::to_string(input.n_classes));
  }
  FeatureDataset dataset = config.recon == ReconKind::Bce && !input.normalization
                               ? normalize(input)
                               : input;

  const Rng root(config.seed);
  const TaskSplit split = make_task_split(dataset, config, config.seed);

  ModelConfig mc = config.model;
  mc.input_dim = dataset.dim();
  mc.n_classes = config.total_classes;
  mc.sigmoid_output = config.recon == ReconKind::Bce;
  Rng init_rng = root.derive("init");
  Rng prior_rng = root.derive("prior");
  Rng train_rng = root.derive("train");

  RunLog log;
  try {
    ModelState state = init_model(mc, init_rng);
    std::vector<TaskData> tests;
    for (std::size_t t = 0; t < split.task_count(); ++t) {
      std::optional<ModelState> old;
      if (t > 0) old = state;
      const std::uint64_t old_checksum = old ? old->checksum() : 0;

      state.add_classes(split.classes[t], prior_rng);
      state.task = static_cast<int>(t + 1);
      const int iterations = t == 0 ? config.first_task_iterations : config.later_task_iterations;
      train_task(state, task_data(dataset, split.train[t]), old ? &*old : nullptr, config,
                 iterations, train_rng, &log, observer);
      if (old && old->checksum() != old_checksum) {
        throw ContractError("frozen model was modified during task " + std::to_string(t + 1));
      }

      tests.push_back(task_data(dataset, split.test[t]));
      MetricRecord rec = evaluate(state, tests);

      if (config.eval.frechet || config.eval.prd || config.eval.pca_components > 0) {
        Rng eval_rng = root.derive("eval").derive(static_cast<std::uint64_t>(t));
        std::vector<Tensor> parts;
        for (const TaskData& td : tests) parts.push_back(td.features);
        const Tensor real = encode(vstack(parts), state.encoder).mu;
        const std::size_t n =
            config.eval.generated_samples > 0 ? config.eval.generated_samples : real.rows();
        const Tensor generated = generated_latents(state, n, config.n_cycles, eval_rng);
        if (config.eval.frechet) rec.frechet = frechet_distance(generated, real);
        if (config.eval.prd) {
          PrdSummary s;
          s.curve = prd_curve(real, generated, config.eval.prd_clusters, config.eval.prd_grid,
                              mix_seed(config.seed, t));
          s.f8 = prd_f_beta(s.curve, 8.0);
          s.f1_8 = prd_f_beta(s.curve, 1.0 / 8.0);
          rec.prd = std::move(s);
        }
        if (config.eval.pca_components > 0) {
          const PcaResult pca = pca_project(real, config.eval.pca_components);
          LatentProjection proj;
          proj.real = pca.projected;
          Tensor centered = generated;
          for (std::size_t r = 0; r < centered.rows(); ++r) {
            for (std::size_t j = 0; j < centered.cols(); ++j) centered(r, j) -= pca.mean[j];
          }
          proj.generated = matmul(centered, transpose(pca.components));
          proj.explained_ratio = pca.explained_ratio;
          rec.pca = std::move(proj);
        }
      }

      if (observer != nullptr) observer->on_task_end(rec, state);
      log.metrics.push_back(std::move(rec));
      log.checkpoints.push_back(state);
    }
  } catch (const Error& e) {
    throw ScenarioAborted(e.what(), std::move(log));
  }
  return log;
}

}  // namespace gfr
