// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver behind the `gfr` command-line tool: JSON configs,
// multi-seed runs, aggregation across seeds, the four-step ablation sweep,
// and merging of finished run directories into plot-ready CSV files.
//
// Run directory layout (everything CSV has a header row):
//
//   <out>/config.json             resolved configuration
//   <out>/summary.json            status and per-seed outcome
//   <out>/aggregate.csv           task,metric,mean,std,stderr,n
//   <out>/seed_<s>/metrics.csv    task,metric,value   (appended per task)
//   <out>/seed_<s>/losses.csv     one row per iteration
//   <out>/seed_<s>/prd.csv        task,point,precision,recall
//   <out>/seed_<s>/pca.csv        task,source,pc1..pck
//   <out>/seed_<s>/summary.json   status, error, average incremental accuracy
//   <out>/seed_<s>/checkpoints/task_<t>.json   (save_checkpoints)
//
// An ablation run writes one such directory per variant under <out> plus
// <out>/ablation.csv.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfr/data.hpp"
#include "gfr/scenario.hpp"
#include "gfr/trainer.hpp"

namespace gfr {

struct DatasetSource {
  std::optional<std::filesystem::path> path;  // feature file (manifest or CSV)
  std::optional<SynthSpec> synthetic;         // exactly one of the two is set
};

struct ExperimentConfig {
  std::string method = "gfr";
  DatasetSource dataset;
  /// 0 = take the class count from the dataset.
  std::size_t total_classes = 0;
  ScenarioConfig scenario;  // scenario.seed is overwritten per seed
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out = "results";
  std::size_t pca_components = 0;
  bool ablation = false;
  bool save_checkpoints = false;
  std::size_t threads = 1;
};

/// Parses a config document. Relative dataset paths resolve against
/// `base_dir`. Throws ConfigError listing every offending field, one per
/// line, as "<field>: <problem>".
ExperimentConfig parse_experiment_config(const nlohmann::json& doc,
                                         const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json experiment_config_to_json(const ExperimentConfig& config);

/// Command-line overrides of top-level config fields.
struct ConfigOverrides {
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::filesystem::path> out;
  std::optional<int> cycles;
  bool no_latent_match = false;
  bool no_latent_distill = false;
  bool ablation = false;
  std::optional<std::size_t> threads;
};
void apply_overrides(ExperimentConfig& config, const ConfigOverrides& overrides);

/// "1,2,3" -> {1,2,3}; throws ConfigError on anything else.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

FeatureDataset load_dataset(const DatasetSource& source);

/// Rows of metrics.csv for one task boundary.
struct MetricRow {
  int task = 0;
  std::string metric;
  double value = 0.0;
};
/// Per-task rows: average_accuracy, avg_incremental_accuracy (running mean up
/// to this task), acc_task<j>, and frechet / prd_f8 / prd_f1_8 when measured.
std::vector<MetricRow> metric_rows(const MetricRecord& record, double running_incremental);

struct AggregateRow {
  int task = 0;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;     // population standard deviation
  double stderr_ = 0.0; // sample standard deviation / sqrt(n); 0 when n = 1
  std::size_t n = 0;
};
/// Groups per-seed rows by (task, metric), in first-seen order.
std::vector<AggregateRow> aggregate(const std::vector<std::vector<MetricRow>>& per_seed);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// The four ablation variants, in reporting order:
/// baseline, +latent_match, +latent_match+latent_distill, +all+cycles.
struct AblationVariant {
  std::string name;
  bool latent_match;
  bool latent_distill;
  int n_cycles;
};
std::vector<AblationVariant> ablation_variants(const ExperimentConfig& config);

/// Runs every seed (and every ablation variant) and writes the directory
/// layout above. Returns the process exit code: 0 on success, 1 if any run
/// aborted (partial results stay on disk).
int run_experiment(const ExperimentConfig& config, std::ostream& log);

struct ReportSummary {
  std::vector<std::filesystem::path> processed;
  std::vector<std::pair<std::filesystem::path, std::string>> skipped;
};
/// Merges complete run directories (or ablation roots) into
///   comparison.csv   method,n_seeds,n_cycles,final_average_accuracy_mean,...
///   long.csv         method,seed,task,metric,value
///   prd_long.csv     method,task,precision,recall  (mean over seeds)
///   fd_vs_cycles.csv n_cycles,task,frechet_mean,frechet_std,n  (>= 2 cycle settings)
ReportSummary report(const std::vector<std::filesystem::path>& dirs,
                     const std::filesystem::path& out, std::ostream& log);

}  // namespace gfr
