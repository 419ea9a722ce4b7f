// SPDX-License-Identifier: Apache-2.0
//
// Class-incremental training loop.
//
// For each task t:
//   1. snapshot the current model as the frozen `old` model (t > 1),
//   2. activate the new classes in the prior table,
//   3. train on the current task's data; when an old model exists and replay
//      is enabled, every iteration also draws a replay batch from it,
//   4. evaluate on the test data of every task seen so far.
//
// Prediction never receives a task id: it ranges over all seen classes.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gfr/data.hpp"
#include "gfr/error.hpp"
#include "gfr/losses.hpp"
#include "gfr/metrics.hpp"
#include "gfr/model.hpp"
#include "gfr/rng.hpp"
#include "gfr/scenario.hpp"

namespace gfr {

struct PrdSummary {
  double f8 = 0.0;    // max F_8   (recall-weighted)
  double f1_8 = 0.0;  // max F_1/8 (precision-weighted)
  PRDCurve curve;
};

/// Real and generated latents in the principal axes of the real ones.
struct LatentProjection {
  Tensor real;       // samples x k
  Tensor generated;  // samples x k
  std::vector<double> explained_ratio;
};

/// Measurements taken at one task boundary (tasks are 1-based).
struct MetricRecord {
  int task = 0;
  std::vector<double> task_accuracy;  // accuracy on the test data of tasks 1..task
  double average_accuracy = 0.0;      // mean of task_accuracy
  std::optional<double> frechet;      // FD(generated latents, real latents)
  std::optional<PrdSummary> prd;
  std::optional<LatentProjection> pca;
};

struct IterationLog {
  int task = 0;
  int iteration = 0;               // within the task
  std::int64_t global_iteration = 0;  // across the whole run, strictly increasing
  LossReport loss;
};

struct RunLog {
  std::vector<IterationLog> losses;
  std::vector<MetricRecord> metrics;     // one per completed task
  std::vector<ModelState> checkpoints;   // model after each completed task

  /// Mean over task boundaries of the average accuracy (0 when empty).
  double average_incremental_accuracy() const;
};

/// Hooks for streaming progress out of a run (e.g. append-only files).
class RunObserver {
 public:
  virtual ~RunObserver() = default;
  virtual void on_iteration(const IterationLog& /*entry*/) {}
  virtual void on_task_end(const MetricRecord& /*record*/, const ModelState& /*model*/) {}
};

struct TaskData {
  Tensor features;  // samples x N
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

TaskData task_data(const FeatureDataset& dataset, std::span<const std::size_t> indices);

/// A loss became NaN/Inf; carries the terms computed so far for that batch.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& message, LossReport partial, int task, int iteration)
      : NumericError(message), report(std::move(partial)), task(task), iteration(iteration) {}
  LossReport report;
  int task;
  int iteration;
};

/// run_scenario failed part-way; `partial` holds everything logged before.
class ScenarioAborted : public Error {
 public:
  ScenarioAborted(const std::string& message, RunLog partial)
      : Error(message), partial(std::move(partial)) {}
  RunLog partial;
};

/// Runs `iterations` Adam steps on `state` (fresh optimizer moments). `old`
/// is the frozen previous-task model, or nullptr on the first task; replay
/// happens only when it is present and `config.replay` is set.
void train_task(ModelState& state, const TaskData& data, const ModelState* old,
                const ScenarioConfig& config, int iterations, Rng& rng, RunLog* log = nullptr,
                RunObserver* observer = nullptr);

/// Per-task accuracy of task-agnostic prediction over all seen classes.
MetricRecord evaluate(const ModelState& state, std::span<const TaskData> tests);

/// The full loop. Throws ScenarioAborted (with the partial log) on failure.
RunLog run_scenario(const ScenarioConfig& config, const FeatureDataset& dataset,
                    RunObserver* observer = nullptr);

}  // namespace gfr
