// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "gfr/error.hpp"
#include "gfr/experiment.hpp"
#include "gfr/rng.hpp"
#include "oracles.hpp"

namespace gfr {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

using CsvRow = std::map<std::string, std::string>;

/// Plain comma splitting; the files under test never quote fields.
std::vector<CsvRow> read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<CsvRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  auto split = [](const std::string& text) {
    std::vector<std::string> cells;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!text.empty() && text.back() == ',') cells.emplace_back();
    return cells;
  };
  const auto header = split(line);
  while (std::getline(in, line)) {
    const auto cells = split(line);
    CsvRow row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

json tiny_config(const fs::path& out) {
  return {
      {"method", "tiny"},
      {"dataset",
       {{"synthetic",
         {{"classes", 4}, {"dim", 6}, {"per_class", 30}, {"separation", 4.0}, {"sigma", 0.5},
          {"seed", 3}}}}},
      {"seeds", {1, 2}},
      {"out", out.string()},
      {"first_task_classes", 2},
      {"incremental_tasks", 2},
      {"first_task_iterations", 20},
      {"later_task_iterations", 10},
      {"batch_size", 8},
      {"latent_dim", 2},
      {"hidden", 8},
      {"metrics",
       {{"frechet", true},
        {"prd", true},
        {"prd_clusters", 3},
        {"prd_grid", 11},
        {"generated_samples", 40}}},
  };
}

std::string config_error(const json& doc) {
  try {
    parse_experiment_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

// ---- configuration -----------------------------------------------------------

TEST(ExperimentConfig, ParsesAndRoundTrips) {
  const ExperimentConfig c = parse_experiment_config(tiny_config("out_dir"));
  EXPECT_EQ(c.method, "tiny");
  ASSERT_TRUE(c.dataset.synthetic.has_value());
  EXPECT_EQ(c.dataset.synthetic->classes, 4u);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(c.scenario.first_task_classes, 2u);
  EXPECT_EQ(c.scenario.model.latent_dim, 2u);
  EXPECT_TRUE(c.scenario.eval.frechet);

  const json again = experiment_config_to_json(parse_experiment_config(experiment_config_to_json(c)));
  EXPECT_EQ(again, experiment_config_to_json(c));
}

TEST(ExperimentConfig, ShippedExampleIsValid) {
  const ExperimentConfig c = load_experiment_config(GFR_EXAMPLE_CONFIG);
  EXPECT_EQ(c.seeds.size(), 3u);
  EXPECT_EQ(c.scenario.n_cycles, 2);
  EXPECT_TRUE(c.dataset.synthetic.has_value());
}

TEST(ExperimentConfig, RelativePathsResolveAgainstBase) {
  json doc = tiny_config("o");
  doc["dataset"] = {{"path", "features/train.json"}};
  doc["total_classes"] = 4;
  const ExperimentConfig c = parse_experiment_config(doc, "/data/exp");
  ASSERT_TRUE(c.dataset.path.has_value());
  EXPECT_EQ(*c.dataset.path, fs::path("/data/exp/features/train.json"));
}

TEST(ExperimentConfig, ReportsEveryBadFieldAtOnce) {
  json doc = tiny_config("o");
  doc["batch_size"] = "large";
  doc["learning_rate"] = -1;  // type is fine; value checked later
  doc["latent_dim"] = -2;
  doc["colour"] = "blue";
  doc["metrics"]["prd_bins"] = 3;
  const std::string msg = config_error(doc);
  EXPECT_NE(msg.find("batch_size: must be a non-negative integer"), std::string::npos) << msg;
  EXPECT_NE(msg.find("latent_dim: must be a non-negative integer"), std::string::npos) << msg;
  EXPECT_NE(msg.find("colour: unknown field"), std::string::npos) << msg;
  EXPECT_NE(msg.find("metrics.prd_bins: unknown field"), std::string::npos) << msg;
}

TEST(ExperimentConfig, DatasetNeedsExactlyOneSource) {
  json doc = tiny_config("o");
  doc["dataset"]["path"] = "x.json";
  EXPECT_NE(config_error(doc).find("exactly one of"), std::string::npos);
  doc["dataset"] = json::object();
  EXPECT_NE(config_error(doc).find("exactly one of"), std::string::npos);
  doc.erase("dataset");
  EXPECT_NE(config_error(doc).find("dataset: is required"), std::string::npos);
}

TEST(ExperimentConfig, SyntheticFieldsAreChecked) {
  json doc = tiny_config("o");
  doc["dataset"]["synthetic"]["classes"] = 0;
  doc["dataset"]["synthetic"]["sigma"] = -1.0;
  doc["dataset"]["synthetic"]["noise"] = 1;
  const std::string msg = config_error(doc);
  EXPECT_NE(msg.find("dataset.synthetic.classes: must be positive"), std::string::npos) << msg;
  EXPECT_NE(msg.find("dataset.synthetic.sigma: must be >= 0"), std::string::npos) << msg;
  EXPECT_NE(msg.find("dataset.synthetic.noise: unknown field"), std::string::npos) << msg;
}

TEST(ExperimentConfig, ScenarioLevelChecks) {
  json doc = tiny_config("o");
  doc["incremental_tasks"] = 3;  // 2 remaining classes cannot split into 3 tasks
  EXPECT_FALSE(config_error(doc).empty());
  doc = tiny_config("o");
  doc["seeds"] = json::array();
  EXPECT_NE(config_error(doc).find("seeds:"), std::string::npos);
  doc = tiny_config("o");
  doc["seeds"] = {1, -4};
  EXPECT_NE(config_error(doc).find("seeds:"), std::string::npos);
  doc = tiny_config("o");
  doc["recon"] = "l1";
  EXPECT_NE(config_error(doc).find("recon:"), std::string::npos);
  doc = tiny_config("o");
  doc["threads"] = 0;
  EXPECT_NE(config_error(doc).find("threads: must be positive"), std::string::npos);
  doc = tiny_config("o");
  doc["method"] = "a,b";
  EXPECT_NE(config_error(doc).find("method:"), std::string::npos);
}

TEST(ExperimentConfig, TermSwitchesZeroTheWeights) {
  json doc = tiny_config("o");
  doc["latent_match"] = false;
  const ExperimentConfig c = parse_experiment_config(doc);
  EXPECT_EQ(c.scenario.weights.latent_match, 0.0);
  EXPECT_GT(c.scenario.weights.latent_distill, 0.0);
}

TEST(ExperimentConfig, Overrides) {
  ExperimentConfig c = parse_experiment_config(tiny_config("o"));
  ConfigOverrides o;
  o.seeds = std::vector<std::uint64_t>{7, 8, 9};
  o.out = "elsewhere";
  o.cycles = 4;
  o.no_latent_distill = true;
  o.threads = 3;
  apply_overrides(c, o);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{7, 8, 9}));
  EXPECT_EQ(c.out, fs::path("elsewhere"));
  EXPECT_EQ(c.scenario.n_cycles, 4);
  EXPECT_EQ(c.scenario.weights.latent_distill, 0.0);
  EXPECT_GT(c.scenario.weights.latent_match, 0.0);
  EXPECT_EQ(c.threads, 3u);

  ConfigOverrides bad;
  bad.cycles = -1;
  EXPECT_THROW(apply_overrides(c, bad), ConfigError);
  bad = {};
  bad.threads = 0;
  EXPECT_THROW(apply_overrides(c, bad), ConfigError);
}

TEST(ExperimentConfig, SeedLists) {
  EXPECT_EQ(parse_seed_list("1,2,3"), (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(parse_seed_list("42"), (std::vector<std::uint64_t>{42}));
  for (const char* bad : {"", "1,,2", "a", "1,-2", "1.5", "1,"}) {
    EXPECT_THROW(parse_seed_list(bad), ConfigError) << '"' << bad << '"';
  }
}

// ---- numbers and aggregation ---------------------------------------------------

TEST(FormatDouble, RoundTripsExactly) {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const double v = rng.normal() * std::pow(10.0, static_cast<double>(rng.index(40)) - 20.0);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(std::stod(format_double(0.1)), 0.1);
}

TEST(Aggregate, MatchesHandComputation) {
  const std::vector<std::vector<MetricRow>> per_seed{
      {{1, "average_accuracy", 0.9}, {1, "frechet", 2.0}, {2, "average_accuracy", 0.7}},
      {{1, "average_accuracy", 0.8}, {1, "frechet", 4.0}, {2, "average_accuracy", 0.6}},
      {{1, "average_accuracy", 0.4}, {1, "frechet", 9.0}, {2, "average_accuracy", 0.2}},
  };
  const auto rows = aggregate(per_seed);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].metric, "average_accuracy");
  EXPECT_EQ(rows[1].metric, "frechet");
  EXPECT_EQ(rows[2].task, 2);

  const double mean = (0.9 + 0.8 + 0.4) / 3.0;
  const double ss = (0.9 - mean) * (0.9 - mean) + (0.8 - mean) * (0.8 - mean) +
                    (0.4 - mean) * (0.4 - mean);
  EXPECT_NEAR(rows[0].mean, mean, 1e-12);
  EXPECT_NEAR(rows[0].std, std::sqrt(ss / 3.0), 1e-12);
  EXPECT_NEAR(rows[0].stderr_, std::sqrt(ss / 2.0) / std::sqrt(3.0), 1e-12);
  EXPECT_EQ(rows[0].n, 3u);
  EXPECT_NEAR(rows[1].mean, 5.0, 1e-12);

  const auto single = aggregate({{{1, "average_accuracy", 0.3}}});
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].std, 0.0);
  EXPECT_EQ(single[0].stderr_, 0.0);
}

TEST(MetricRows, NamesAndOptionalColumns) {
  MetricRecord rec;
  rec.task = 3;
  rec.average_accuracy = 0.75;
  rec.task_accuracy = {0.5, 0.75, 1.0};
  auto rows = metric_rows(rec, 0.8);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].metric, "average_accuracy");
  EXPECT_EQ(rows[1].metric, "avg_incremental_accuracy");
  EXPECT_EQ(rows[1].value, 0.8);
  EXPECT_EQ(rows[4].metric, "acc_task3");
  for (const auto& r : rows) EXPECT_EQ(r.task, 3);

  rec.frechet = 1.5;
  rows = metric_rows(rec, 0.8);
  EXPECT_EQ(rows.back().metric, "frechet");
  EXPECT_EQ(rows.back().value, 1.5);
}

TEST(Ablation, VariantOrder) {
  ExperimentConfig c;
  auto v = ablation_variants(c);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v[0].name, "baseline");
  EXPECT_FALSE(v[0].latent_match);
  EXPECT_TRUE(v[1].latent_match && !v[1].latent_distill);
  EXPECT_TRUE(v[2].latent_match && v[2].latent_distill && v[2].n_cycles == 0);
  EXPECT_GT(v[3].n_cycles, 0);
  c.scenario.n_cycles = 3;
  EXPECT_EQ(ablation_variants(c)[3].n_cycles, 3);
}

// ---- end to end ------------------------------------------------------------------

ExperimentConfig tiny(const fs::path& out) { return parse_experiment_config(tiny_config(out)); }

TEST(RunExperiment, WritesTheLayoutAndIsDeterministic) {
  const fs::path root = testing::scratch_dir("experiment_run");
  std::ostringstream log;
  ExperimentConfig a = tiny(root / "a");
  a.threads = 2;
  ASSERT_EQ(run_experiment(a, log), 0) << log.str();
  ASSERT_EQ(run_experiment(tiny(root / "b"), log), 0) << log.str();

  for (const char* f : {"config.json", "summary.json", "aggregate.csv"}) {
    EXPECT_TRUE(fs::exists(root / "a" / f)) << f;
  }
  for (const char* seed : {"seed_1", "seed_2"}) {
    for (const char* f : {"metrics.csv", "losses.csv", "prd.csv", "summary.json"}) {
      const fs::path pa = root / "a" / seed / f;
      ASSERT_TRUE(fs::exists(pa)) << pa;
      // Thread count does not change any result.
      EXPECT_EQ(oracle::read_file(pa), oracle::read_file(root / "b" / seed / f)) << pa;
    }
  }
  EXPECT_EQ(oracle::read_file(root / "a" / "aggregate.csv"),
            oracle::read_file(root / "b" / "aggregate.csv"));

  // Aggregate means equal the mean over the per-seed files.
  std::map<std::pair<std::string, std::string>, std::vector<double>> per_seed;
  for (const char* seed : {"seed_1", "seed_2"}) {
    for (const CsvRow& r : read_csv(root / "a" / seed / "metrics.csv")) {
      per_seed[{r.at("task"), r.at("metric")}].push_back(std::stod(r.at("value")));
    }
  }
  const auto agg = read_csv(root / "a" / "aggregate.csv");
  ASSERT_EQ(agg.size(), per_seed.size());
  for (const CsvRow& r : agg) {
    const auto& v = per_seed.at({r.at("task"), r.at("metric")});
    ASSERT_EQ(v.size(), 2u);
    EXPECT_NEAR(std::stod(r.at("mean")), (v[0] + v[1]) / 2.0, 1e-12);
    EXPECT_NEAR(std::stod(r.at("std")), std::abs(v[0] - v[1]) / 2.0, 1e-12);
    EXPECT_EQ(r.at("n"), "2");
  }

  const json summary = json::parse(oracle::read_file(root / "a" / "summary.json"));
  EXPECT_EQ(summary.at("status"), "complete");
  const json config = json::parse(oracle::read_file(root / "a" / "config.json"));
  EXPECT_EQ(config.at("total_classes"), 4);

  // Three tasks, each with a metrics block including the generative metrics.
  std::set<std::string> tasks, metrics;
  for (const CsvRow& r : read_csv(root / "a" / "seed_1" / "metrics.csv")) {
    tasks.insert(r.at("task"));
    metrics.insert(r.at("metric"));
  }
  EXPECT_EQ(tasks.size(), 3u);
  for (const char* m : {"average_accuracy", "avg_incremental_accuracy", "acc_task1", "acc_task3",
                        "frechet", "prd_f8", "prd_f1_8"}) {
    EXPECT_TRUE(metrics.count(m)) << m;
  }
}

TEST(RunExperiment, AblationWritesOneRunPerVariant) {
  const fs::path root = testing::scratch_dir("experiment_ablation");
  ExperimentConfig c = tiny(root);
  c.seeds = {5};
  c.ablation = true;
  c.scenario.n_cycles = 2;
  std::ostringstream log;
  ASSERT_EQ(run_experiment(c, log), 0) << log.str();
  const auto table = read_csv(root / "ablation.csv");
  ASSERT_EQ(table.size(), 4u);
  const auto variants = ablation_variants(c);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(table[i].at("variant"), variants[i].name);
    EXPECT_EQ(table[i].at("n_cycles"), std::to_string(variants[i].n_cycles));
    const json cfg =
        json::parse(oracle::read_file(root / variants[i].name / "config.json"));
    EXPECT_EQ(cfg.at("latent_match"), variants[i].latent_match);
    EXPECT_EQ(cfg.at("latent_distill"), variants[i].latent_distill);
    EXPECT_EQ(cfg.at("cycles"), variants[i].n_cycles);
  }
}

TEST(Report, MergesRunsAndSkipsIncompleteOnes) {
  const fs::path root = testing::scratch_dir("experiment_report");
  std::ostringstream log;
  ExperimentConfig a = tiny(root / "first");
  a.method = "alpha";
  ExperimentConfig b = tiny(root / "second");
  b.method = "beta";
  b.seeds = {3};
  ExperimentConfig dup = tiny(root / "third");
  dup.method = "alpha";
  dup.seeds = {4};
  for (const auto& c : {a, b, dup}) ASSERT_EQ(run_experiment(c, log), 0) << log.str();
  // An interrupted run: config.json but no summary.json.
  fs::create_directories(root / "broken");
  fs::copy_file(root / "first" / "config.json", root / "broken" / "config.json");

  const ReportSummary s = report({root / "first", root / "second", root / "third", root / "broken",
                                  root / "missing"},
                                 root / "report", log);
  EXPECT_EQ(s.processed.size(), 3u);
  ASSERT_EQ(s.skipped.size(), 2u);
  EXPECT_NE(log.str().find("broken"), std::string::npos);

  const auto comparison = read_csv(root / "report" / "comparison.csv");
  ASSERT_EQ(comparison.size(), 3u);
  EXPECT_EQ(comparison[0].at("method"), "alpha");
  EXPECT_EQ(comparison[0].at("n_seeds"), "2");
  EXPECT_EQ(comparison[1].at("method"), "beta");
  EXPECT_EQ(comparison[2].at("method"), "alpha@third");
  EXPECT_EQ(comparison[0].at("final_task"), "3");

  // long.csv reproduces every per-seed value exactly.
  std::map<std::string, std::string> from_long;
  for (const CsvRow& r : read_csv(root / "report" / "long.csv")) {
    from_long[r.at("method") + "/" + r.at("seed") + "/" + r.at("task") + "/" + r.at("metric")] =
        r.at("value");
  }
  std::size_t compared = 0;
  for (const auto& [method, dir, seed] :
       std::vector<std::tuple<std::string, std::string, std::string>>{
           {"alpha", "first", "1"}, {"alpha", "first", "2"}, {"beta", "second", "3"},
           {"alpha@third", "third", "4"}}) {
    for (const CsvRow& r : read_csv(root / dir / ("seed_" + seed) / "metrics.csv")) {
      const std::string key = method + "/" + seed + "/" + r.at("task") + "/" + r.at("metric");
      ASSERT_TRUE(from_long.count(key)) << key;
      EXPECT_EQ(std::stod(from_long.at(key)), std::stod(r.at("value"))) << key;
      ++compared;
    }
  }
  EXPECT_EQ(compared, from_long.size());

  // Final average accuracy mean over the two alpha seeds.
  double expected = 0.0;
  for (const char* seed : {"seed_1", "seed_2"}) {
    for (const CsvRow& r : read_csv(root / "first" / seed / "metrics.csv")) {
      if (r.at("task") == "3" && r.at("metric") == "average_accuracy") {
        expected += std::stod(r.at("value")) / 2.0;
      }
    }
  }
  EXPECT_NEAR(std::stod(comparison[0].at("final_average_accuracy_mean")), expected, 1e-12);
  EXPECT_FALSE(read_csv(root / "report" / "prd_long.csv").empty());
  // All runs share one cycle setting, so there is no cycle series.
  EXPECT_FALSE(fs::exists(root / "report" / "fd_vs_cycles.csv"));
}

TEST(Report, FrechetAgainstCycleCount) {
  const fs::path root = testing::scratch_dir("experiment_cycles");
  std::ostringstream log;
  std::vector<fs::path> dirs;
  const std::vector<int> cycles{0, 2, 5, 10, 20};
  for (int n : cycles) {
    ExperimentConfig c = tiny(root / ("cycles_" + std::to_string(n)));
    c.method = "cycles" + std::to_string(n);
    c.seeds = {1};
    c.scenario.n_cycles = n;
    c.scenario.eval.prd = false;
    ASSERT_EQ(run_experiment(c, log), 0) << log.str();
    dirs.push_back(c.out);
  }
  report(dirs, root / "report", log);
  const auto rows = read_csv(root / "report" / "fd_vs_cycles.csv");
  ASSERT_EQ(rows.size(), 3u * cycles.size());  // one series of 5 points per task
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < cycles.size(); ++i) {
      const CsvRow& r = rows[t * cycles.size() + i];
      EXPECT_EQ(r.at("task"), std::to_string(t + 1));
      EXPECT_EQ(r.at("n_cycles"), std::to_string(cycles[i]));
      EXPECT_EQ(r.at("n"), "1");
      EXPECT_TRUE(std::isfinite(std::stod(r.at("frechet_mean"))));
    }
  }
}

}  // namespace
}  // namespace gfr
