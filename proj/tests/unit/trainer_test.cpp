// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "fixtures.hpp"
#include "gfr/error.hpp"
#include "gfr/trainer.hpp"

namespace gfr {
namespace {

using testing::small_model;

FeatureDataset toy_dataset(std::size_t classes, std::uint64_t seed = 3) {
  SynthSpec spec;
  spec.classes = classes;
  spec.dim = 8;
  spec.per_class = 100;
  spec.separation = 4.0;
  spec.sigma = 0.5;
  spec.seed = seed;
  return normalize(synth_gaussian_clusters(spec));
}

ScenarioConfig toy_config(std::size_t classes, std::size_t first, std::size_t tasks) {
  ScenarioConfig c;
  c.total_classes = classes;
  c.first_task_classes = first;
  c.incremental_tasks = tasks;
  c.first_task_iterations = 60;
  c.later_task_iterations = 30;
  c.batch_size = 16;
  c.model.latent_dim = 3;
  c.model.hidden = 16;
  c.adam.learning_rate = 1e-3;
  return c;
}

ModelState fresh_model(const ScenarioConfig& c, const FeatureDataset& ds, std::uint64_t seed) {
  ModelConfig m = c.model;
  m.input_dim = ds.dim();
  m.n_classes = ds.n_classes;
  Rng rng(seed);
  ModelState s = init_model(m, rng);
  std::vector<int> all(ds.n_classes);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  s.add_classes(all, rng);
  s.task = 1;
  return s;
}

TEST(TrainTask, ZeroIterationsLeaveStateUnchanged) {
  FeatureDataset ds = toy_dataset(2);
  ScenarioConfig c = toy_config(2, 2, 0);
  ModelState s = fresh_model(c, ds, 1);
  const auto before = s.checksum();
  Rng rng(2);
  RunLog log;
  train_task(s, task_data(ds, ds.indices(Split::Train)), nullptr, c, 0, rng, &log);
  EXPECT_EQ(s.checksum(), before);
  EXPECT_TRUE(log.losses.empty());
}

TEST(TrainTask, FirstTaskHasNoReplayTerms) {
  FeatureDataset ds = toy_dataset(2);
  ScenarioConfig c = toy_config(2, 2, 0);
  ModelState s = fresh_model(c, ds, 1);
  Rng rng(2);
  RunLog log;
  train_task(s, task_data(ds, ds.indices(Split::Train)), nullptr, c, 5, rng, &log);
  ASSERT_EQ(log.losses.size(), 5u);
  for (const auto& entry : log.losses) {
    EXPECT_FALSE(entry.loss.distill.has_value());
    EXPECT_FALSE(entry.loss.latent_distill.has_value());
    EXPECT_TRUE(entry.loss.latent_match.has_value());
    EXPECT_NEAR(entry.loss.total,
                *entry.loss.recon + *entry.loss.latent + *entry.loss.class_ce +
                    *entry.loss.latent_match,
                1e-10);
  }
}

TEST(TrainTask, ReplayTermsAppearWithAnOldModel) {
  FeatureDataset ds = toy_dataset(3);
  ScenarioConfig c = toy_config(3, 2, 1);
  ModelState old = fresh_model(c, ds, 1);
  ModelState s = old;
  Rng rng(2);
  RunLog log;
  const auto old_checksum = old.checksum();
  train_task(s, task_data(ds, ds.indices(Split::Train)), &old, c, 3, rng, &log);
  EXPECT_EQ(old.checksum(), old_checksum);
  for (const auto& entry : log.losses) {
    EXPECT_TRUE(entry.loss.distill.has_value());
    EXPECT_TRUE(entry.loss.latent_distill.has_value());
    EXPECT_NEAR(entry.loss.total, entry.loss.sum_of_terms(), 1e-10);
  }
  c.replay = false;
  RunLog no_replay;
  train_task(s, task_data(ds, ds.indices(Split::Train)), &old, c, 3, rng, &no_replay);
  for (const auto& entry : no_replay.losses) EXPECT_FALSE(entry.loss.distill.has_value());
}

TEST(TrainTask, SeparableTwoClassToyIsLearned) {
  FeatureDataset ds = toy_dataset(2, 11);
  ScenarioConfig c = toy_config(2, 2, 0);
  c.batch_size = 64;
  c.adam.learning_rate = 1e-4;
  c.model.hidden = 32;
  c.model.latent_dim = 4;
  ModelState s = fresh_model(c, ds, 5);
  Rng rng(6);
  train_task(s, task_data(ds, ds.indices(Split::Train)), nullptr, c, 2000, rng);
  const std::vector<TaskData> tests{task_data(ds, ds.indices(Split::Test))};
  EXPECT_GT(evaluate(s, tests).average_accuracy, 0.95);
}

TEST(TrainTask, DeterministicGivenSeed) {
  FeatureDataset ds = toy_dataset(2);
  ScenarioConfig c = toy_config(2, 2, 0);
  ModelState a = fresh_model(c, ds, 1), b = fresh_model(c, ds, 1);
  Rng ra(9), rb(9);
  const TaskData data = task_data(ds, ds.indices(Split::Train));
  train_task(a, data, nullptr, c, 25, ra);
  train_task(b, data, nullptr, c, 25, rb);
  EXPECT_EQ(a.checksum(), b.checksum());
}

TEST(TrainTask, NonFiniteLossAbortsWithReport) {
  FeatureDataset ds = toy_dataset(2);
  ScenarioConfig c = toy_config(2, 2, 0);
  ModelState s = fresh_model(c, ds, 1);
  s.decoder.out.weight[0] = std::numeric_limits<double>::infinity();
  Rng rng(2);
  try {
    train_task(s, task_data(ds, ds.indices(Split::Train)), nullptr, c, 5, rng);
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_EQ(e.task, 1);
    EXPECT_EQ(e.iteration, 0);
    EXPECT_FALSE(e.report.recon.has_value());
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos) << e.what();
  }
}

TEST(TrainTask, RejectsEmptyData) {
  FeatureDataset ds = toy_dataset(2);
  ScenarioConfig c = toy_config(2, 2, 0);
  ModelState s = fresh_model(c, ds, 1);
  Rng rng(2);
  EXPECT_THROW(train_task(s, TaskData{}, nullptr, c, 5, rng), Error);
}

// ---- evaluation ----------------------------------------------------------------

TEST(Evaluate, PerfectClassifier) {
  // Classifier reads the sign of the first latent coordinate; encoder puts
  // the first feature into it.
  ModelState s = small_model(1, 2, 1, 2, 2, {0, 1});
  s.encoder.hidden = {Tensor::matrix({{1, 0}, {0, 1}}), Tensor::zeros(1, 2)};
  s.encoder.out = {Tensor::matrix({{1, 0}, {-1, 0}}), Tensor::zeros(1, 2)};
  s.classifier.out = {Tensor::matrix({{-1, 1}}), Tensor::zeros(1, 2)};
  TaskData t1{Tensor::matrix({{0.0, 1.0}, {0.1, 0.9}}), {0, 0}};
  TaskData t2{Tensor::matrix({{1.0, 0.0}, {0.8, 0.2}}), {1, 1}};
  const std::vector<TaskData> tests{t1, t2};
  MetricRecord r = evaluate(s, tests);
  EXPECT_EQ(r.task_accuracy, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(r.average_accuracy, 1.0);
}

TEST(Evaluate, RandomClassifierIsAtChance) {
  const std::size_t classes = 5;
  ModelState s = small_model(2, 6, 4, 8, classes, {0, 1, 2, 3, 4});
  Rng rng(3);
  const std::size_t n = 5000;
  TaskData t{testing::unit_features(rng, n, 6), {}};
  for (std::size_t i = 0; i < n; ++i) t.labels.push_back(static_cast<int>(rng.index(classes)));
  const std::vector<TaskData> tests{t};
  const double p = 1.0 / classes;
  EXPECT_NEAR(evaluate(s, tests).average_accuracy, p, 3 * std::sqrt(p * (1 - p) / n));
}

TEST(Evaluate, EmptyInputs) {
  ModelState s = small_model(4);
  EXPECT_THROW(evaluate(s, {}), ContractError);
  const std::vector<TaskData> empty_task{TaskData{Tensor({0, 5}), {}}};
  EXPECT_THROW(evaluate(s, empty_task), ContractError);
}

TEST(RunLogTest, AverageIncrementalAccuracyByHand) {
  RunLog log;
  log.metrics.push_back({1, {0.9}, 0.9, {}, {}, {}});
  log.metrics.push_back({2, {0.7, 0.8}, 0.75, {}, {}, {}});
  log.metrics.push_back({3, {0.4, 0.5, 0.9}, 0.6, {}, {}, {}});
  EXPECT_NEAR(log.average_incremental_accuracy(), (0.9 + 0.75 + 0.6) / 3.0, 1e-15);
  EXPECT_EQ(RunLog{}.average_incremental_accuracy(), 0.0);
}

// ---- full scenario --------------------------------------------------------------

TEST(RunScenario, SingleTaskHasNoReplay) {
  FeatureDataset ds = toy_dataset(3);
  ScenarioConfig c = toy_config(3, 3, 0);
  RunLog log = run_scenario(c, ds);
  ASSERT_EQ(log.metrics.size(), 1u);
  for (const auto& e : log.losses) EXPECT_FALSE(e.loss.distill.has_value());
  EXPECT_EQ(log.checkpoints.size(), 1u);
}

TEST(RunScenario, DeterministicAndWellFormed) {
  FeatureDataset ds = toy_dataset(4);
  ScenarioConfig c = toy_config(4, 2, 2);
  c.n_cycles = 1;
  c.eval.frechet = true;
  c.eval.prd = true;
  c.eval.prd_clusters = 4;
  c.eval.prd_grid = 21;
  c.eval.pca_components = 2;
  RunLog a = run_scenario(c, ds);
  RunLog b = run_scenario(c, ds);
  ASSERT_EQ(a.metrics.size(), 3u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(a.metrics[t].task, static_cast<int>(t + 1));
    EXPECT_EQ(a.metrics[t].task_accuracy.size(), t + 1);
    EXPECT_EQ(a.metrics[t].task_accuracy, b.metrics[t].task_accuracy);
    ASSERT_TRUE(a.metrics[t].frechet.has_value());
    EXPECT_EQ(*a.metrics[t].frechet, *b.metrics[t].frechet);
    EXPECT_EQ(a.metrics[t].prd->curve.precision, b.metrics[t].prd->curve.precision);
    EXPECT_EQ(a.metrics[t].pca->real.cols(), 2u);
  }
  EXPECT_EQ(a.checkpoints.back().checksum(), b.checkpoints.back().checksum());
  for (std::size_t i = 1; i < a.losses.size(); ++i) {
    EXPECT_GT(a.losses[i].global_iteration, a.losses[i - 1].global_iteration);
  }
  EXPECT_EQ(a.losses.size(), 60u + 2 * 30u);
  // later tasks see all classes seen so far, never the future ones
  EXPECT_EQ(a.checkpoints[0].seen.size(), 2u);
  EXPECT_EQ(a.checkpoints[2].seen.size(), 4u);
}

TEST(RunScenario, ClassCountMismatchIsAConfigError) {
  FeatureDataset ds = toy_dataset(4);
  ScenarioConfig c = toy_config(5, 3, 1);
  EXPECT_THROW(run_scenario(c, ds), Error);
}

class FailOnTask : public RunObserver {
 public:
  explicit FailOnTask(int task) : task_(task) {}
  void on_iteration(const IterationLog& entry) override {
    if (entry.task == task_) throw NumericError("injected failure");
  }

 private:
  int task_;
};

TEST(RunScenario, AbortKeepsPartialLog) {
  FeatureDataset ds = toy_dataset(4);
  ScenarioConfig c = toy_config(4, 2, 2);
  FailOnTask observer(2);
  try {
    run_scenario(c, ds, &observer);
    FAIL() << "expected ScenarioAborted";
  } catch (const ScenarioAborted& e) {
    EXPECT_EQ(e.partial.metrics.size(), 1u);
    EXPECT_EQ(e.partial.checkpoints.size(), 1u);
    EXPECT_GE(e.partial.losses.size(), 60u);
    EXPECT_NE(std::string(e.what()).find("injected"), std::string::npos);
  }
}

}  // namespace
}  // namespace gfr
