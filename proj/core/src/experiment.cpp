// SPDX-License-Identifier: Apache-2.0
#include "gfr/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "gfr/checkpoint.hpp"
#include "gfr/error.hpp"

namespace gfr {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- config parsing --------------------------------------------------------

/// Collects field-level problems so a bad config reports all of them at once.
class FieldReader {
 public:
  FieldReader(const json& obj, std::string prefix, std::vector<std::string>& errors)
      : obj_(obj), prefix_(std::move(prefix)), errors_(errors) {
    if (!obj_.is_object()) fail("", "must be an object");
  }

  template <class T>
  void read(const char* key, T& target) {
    if (!obj_.is_object() || !obj_.contains(key)) return;
    seen_.insert(key);
    const json& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) return fail(key, "must be a boolean");
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
          return fail(key, "must be a non-negative integer");
        }
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) return fail(key, "must be an integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) return fail(key, "must be a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) return fail(key, "must be a string");
      }
      target = v.get<T>();
    } catch (const json::exception& e) {
      fail(key, e.what());
    }
  }

  /// Marks a key as handled by the caller.
  const json* child(const char* key) {
    if (!obj_.is_object() || !obj_.contains(key)) return nullptr;
    seen_.insert(key);
    return &obj_.at(key);
  }

  void fail(const std::string& key, const std::string& message) {
    std::string field = prefix_;
    if (!key.empty()) field += (field.empty() ? "" : ".") + key;
    errors_.push_back((field.empty() ? "<root>" : field) + ": " + message);
  }

  void reject_unknown() {
    if (!obj_.is_object()) return;
    for (const auto& [key, _] : obj_.items()) {
      if (!seen_.count(key)) fail(key, "unknown field");
    }
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

SynthSpec parse_synth(const json& doc, std::vector<std::string>& errors) {
  SynthSpec s;
  FieldReader r(doc, "dataset.synthetic", errors);
  r.read("classes", s.classes);
  r.read("dim", s.dim);
  r.read("per_class", s.per_class);
  r.read("separation", s.separation);
  r.read("sigma", s.sigma);
  r.read("seed", s.seed);
  r.reject_unknown();
  if (s.classes == 0) r.fail("classes", "must be positive");
  if (s.dim == 0) r.fail("dim", "must be positive");
  if (s.per_class == 0) r.fail("per_class", "must be positive");
  if (s.sigma < 0.0) r.fail("sigma", "must be >= 0");
  return s;
}

json synth_to_json(const SynthSpec& s) {
  return {{"classes", s.classes}, {"dim", s.dim},        {"per_class", s.per_class},
          {"separation", s.separation}, {"sigma", s.sigma}, {"seed", s.seed}};
}

// ---- files -----------------------------------------------------------------

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(path, std::ios::out | mode);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const json& doc) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

/// Streams a run's progress to disk as it happens.
class SeedWriter : public RunObserver {
 public:
  SeedWriter(const fs::path& dir, std::size_t pca_components, bool save_checkpoints)
      : dir_(dir), save_checkpoints_(save_checkpoints) {
    fs::create_directories(dir_);
    metrics_ = open_out(dir_ / "metrics.csv");
    metrics_ << "task,metric,value\n";
    losses_ = open_out(dir_ / "losses.csv");
    losses_ << "global_iteration,task,iteration,recon,latent,class_ce,distill,latent_match,"
               "latent_distill,total\n";
    prd_ = open_out(dir_ / "prd.csv");
    prd_ << "task,point,precision,recall\n";
    if (pca_components > 0) {
      pca_ = open_out(dir_ / "pca.csv");
      pca_ << "task,source";
      for (std::size_t k = 1; k <= pca_components; ++k) pca_ << ",pc" << k;
      pca_ << '\n';
    }
    if (save_checkpoints_) fs::create_directories(dir_ / "checkpoints");
  }

  void on_iteration(const IterationLog& e) override {
    const LossReport& l = e.loss;
    losses_ << e.global_iteration << ',' << e.task << ',' << e.iteration << ',' << opt(l.recon)
            << ',' << opt(l.latent) << ',' << opt(l.class_ce) << ',' << opt(l.distill) << ','
            << opt(l.latent_match) << ',' << opt(l.latent_distill) << ','
            << format_double(l.total) << '\n';
  }

  void on_task_end(const MetricRecord& rec, const ModelState& model) override {
    averages_.push_back(rec.average_accuracy);
    double running = 0.0;
    for (double a : averages_) running += a;
    running /= static_cast<double>(averages_.size());
    for (const MetricRow& row : metric_rows(rec, running)) {
      metrics_ << row.task << ',' << row.metric << ',' << format_double(row.value) << '\n';
      rows_.push_back(row);
    }
    if (rec.prd) {
      for (std::size_t i = 0; i < rec.prd->curve.size(); ++i) {
        prd_ << rec.task << ',' << i << ',' << format_double(rec.prd->curve.precision[i]) << ','
             << format_double(rec.prd->curve.recall[i]) << '\n';
      }
    }
    if (rec.pca && pca_.is_open()) {
      auto dump = [&](const char* source, const Tensor& t) {
        for (std::size_t r = 0; r < t.rows(); ++r) {
          pca_ << rec.task << ',' << source;
          for (double v : t.row_span(r)) pca_ << ',' << format_double(v);
          pca_ << '\n';
        }
      };
      dump("real", rec.pca->real);
      dump("generated", rec.pca->generated);
    }
    if (save_checkpoints_) {
      save_checkpoint(model, dir_ / "checkpoints" / ("task_" + std::to_string(rec.task) + ".json"));
    }
    metrics_.flush();
    losses_.flush();
    prd_.flush();
    if (pca_.is_open()) pca_.flush();
  }

  const std::vector<MetricRow>& rows() const { return rows_; }

 private:
  fs::path dir_;
  bool save_checkpoints_;
  std::ofstream metrics_, losses_, prd_, pca_;
  std::vector<double> averages_;
  std::vector<MetricRow> rows_;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<MetricRow> rows;
  double avg_incremental_accuracy = 0.0;
  std::size_t tasks_completed = 0;
};

SeedOutcome run_seed(const ExperimentConfig& config, const FeatureDataset& dataset,
                     std::uint64_t seed, const fs::path& dir) {
  SeedOutcome outcome;
  outcome.seed = seed;
  ScenarioConfig sc = config.scenario;
  sc.seed = seed;
  sc.eval.pca_components = config.pca_components;
  SeedWriter writer(dir, config.pca_components, config.save_checkpoints);
  RunLog log;
  try {
    log = run_scenario(sc, dataset, &writer);
    outcome.ok = true;
  } catch (const ScenarioAborted& e) {
    log = e.partial;
    outcome.error = e.what();
  }
  outcome.rows = writer.rows();
  outcome.avg_incremental_accuracy = log.average_incremental_accuracy();
  outcome.tasks_completed = log.metrics.size();
  json summary = {{"seed", seed},
                  {"status", outcome.ok ? "complete" : "aborted"},
                  {"tasks_completed", outcome.tasks_completed},
                  {"tasks_expected", sc.task_count()},
                  {"avg_incremental_accuracy", outcome.avg_incremental_accuracy}};
  if (!outcome.ok) summary["error"] = outcome.error;
  write_json(dir / "summary.json", summary);
  return outcome;
}

void write_aggregate(const fs::path& path, const std::vector<AggregateRow>& rows) {
  auto out = open_out(path);
  out << "task,metric,mean,std,stderr,n\n";
  for (const AggregateRow& r : rows) {
    out << r.task << ',' << r.metric << ',' << format_double(r.mean) << ','
        << format_double(r.std) << ',' << format_double(r.stderr_) << ',' << r.n << '\n';
  }
}

/// One method's full multi-seed run into `out`. Returns the per-seed outcomes.
std::vector<SeedOutcome> run_method(const ExperimentConfig& config, const FeatureDataset& dataset,
                                    std::ostream& log) {
  fs::create_directories(config.out);
  write_json(config.out / "config.json", experiment_config_to_json(config));

  std::vector<SeedOutcome> outcomes(config.seeds.size());
  std::mutex log_mutex;
  auto work = [&](std::size_t i) {
    const std::uint64_t seed = config.seeds[i];
    outcomes[i] = run_seed(config, dataset, seed, config.out / ("seed_" + std::to_string(seed)));
    std::lock_guard lock(log_mutex);
    if (outcomes[i].ok) {
      log << config.method << " seed " << seed << ": average incremental accuracy "
          << format_double(outcomes[i].avg_incremental_accuracy) << '\n';
    } else {
      log << config.method << " seed " << seed << ": aborted: " << outcomes[i].error << '\n';
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(config.threads, 1, config.seeds.size());
  if (workers == 1) {
    for (std::size_t i = 0; i < config.seeds.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::mutex next_mutex;
    std::size_t next = 0;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard lock(next_mutex);
            if (next >= config.seeds.size()) return;
            i = next++;
          }
          work(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  std::vector<std::vector<MetricRow>> per_seed;
  json seeds = json::array();
  bool all_ok = true;
  for (const SeedOutcome& o : outcomes) {
    per_seed.push_back(o.rows);
    all_ok = all_ok && o.ok;
    seeds.push_back({{"seed", o.seed}, {"status", o.ok ? "complete" : "aborted"}});
  }
  write_aggregate(config.out / "aggregate.csv", aggregate(per_seed));
  write_json(config.out / "summary.json", {{"method", config.method},
                                           {"status", all_ok ? "complete" : "aborted"},
                                           {"seeds", seeds}});
  return outcomes;
}

// ---- report ----------------------------------------------------------------

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& text, const fs::path& file) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw FormatError(file.string() + ": bad number '" + text + "'");
  }
  return v;
}

/// Reads a CSV with a header; returns rows as column-name -> text maps.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  std::vector<std::map<std::string, std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " columns");
    }
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

struct LoadedSeed {
  std::uint64_t seed = 0;
  std::vector<MetricRow> rows;
  std::map<int, std::vector<std::pair<double, double>>> prd;  // task -> (precision, recall)
};

struct LoadedRun {
  fs::path dir;
  std::string method;
  int n_cycles = 0;
  std::vector<LoadedSeed> seeds;
};

LoadedRun load_run(const fs::path& dir) {
  LoadedRun run;
  run.dir = dir;
  std::ifstream cfg_in(dir / "config.json");
  if (!cfg_in) throw FormatError("no config.json");
  json cfg;
  try {
    cfg = json::parse(cfg_in);
  } catch (const json::exception& e) {
    throw FormatError(std::string("config.json: ") + e.what());
  }
  run.method = cfg.value("method", dir.filename().string());
  run.n_cycles = cfg.value("cycles", 0);

  std::ifstream sum_in(dir / "summary.json");
  if (!sum_in) throw FormatError("no summary.json (run incomplete)");
  const json summary = json::parse(sum_in, nullptr, false);
  if (summary.is_discarded() || summary.value("status", "") != "complete") {
    throw FormatError("run did not complete");
  }
  for (const json& s : cfg.at("seeds")) {
    LoadedSeed seed;
    seed.seed = s.get<std::uint64_t>();
    const fs::path sdir = dir / ("seed_" + std::to_string(seed.seed));
    for (const auto& row : read_csv(sdir / "metrics.csv")) {
      seed.rows.push_back({std::stoi(row.at("task")), row.at("metric"),
                           parse_double(row.at("value"), sdir / "metrics.csv")});
    }
    if (fs::exists(sdir / "prd.csv")) {
      for (const auto& row : read_csv(sdir / "prd.csv")) {
        seed.prd[std::stoi(row.at("task"))].emplace_back(
            parse_double(row.at("precision"), sdir / "prd.csv"),
            parse_double(row.at("recall"), sdir / "prd.csv"));
      }
    }
    run.seeds.push_back(std::move(seed));
  }
  if (run.seeds.empty()) throw FormatError("no seeds");
  return run;
}

/// A directory is a run if it has config.json; otherwise its immediate
/// subdirectories holding config.json are runs (ablation roots).
std::vector<fs::path> expand_run_dirs(const fs::path& dir) {
  if (fs::exists(dir / "config.json")) return {dir};
  std::vector<fs::path> out;
  if (fs::is_directory(dir)) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() && fs::exists(entry.path() / "config.json")) {
        out.push_back(entry.path());
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct Stats {
  double mean = 0.0, std = 0.0, stderr_ = 0.0;
  std::size_t n = 0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  s.n = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(s.n);
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(s.n));
  s.stderr_ = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) /
                            std::sqrt(static_cast<double>(s.n))
                      : 0.0;
  return s;
}

}  // namespace

// ---- public API ------------------------------------------------------------

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw FormatError("cannot format number");
  return std::string(buf, ptr);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      throw ConfigError("seeds: '" + item + "' is not a non-negative integer");
    }
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (text.back() == ',') throw ConfigError("seeds: trailing comma in '" + text + "'");
  return seeds;
}

ExperimentConfig parse_experiment_config(const json& doc, const fs::path& base_dir) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  ScenarioConfig& s = c.scenario;
  FieldReader r(doc, "", errors);

  r.read("method", c.method);
  if (c.method.empty() || c.method.find_first_of(",\"\n") != std::string::npos) {
    r.fail("method", "must be non-empty and contain no commas, quotes or newlines");
  }

  if (const json* ds = r.child("dataset")) {
    FieldReader dr(*ds, "dataset", errors);
    std::string path;
    dr.read("path", path);
    if (!path.empty()) {
      fs::path p(path);
      c.dataset.path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    if (const json* syn = dr.child("synthetic")) c.dataset.synthetic = parse_synth(*syn, errors);
    dr.reject_unknown();
    if (c.dataset.path.has_value() == c.dataset.synthetic.has_value()) {
      dr.fail("", "exactly one of 'path' or 'synthetic' is required");
    }
  } else {
    r.fail("dataset", "is required");
  }

  if (const json* seeds = r.child("seeds")) {
    if (!seeds->is_array() || seeds->empty()) {
      r.fail("seeds", "must be a non-empty array of non-negative integers");
    } else {
      c.seeds.clear();
      for (const json& v : *seeds) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
          r.fail("seeds", "must contain only non-negative integers");
          break;
        }
        c.seeds.push_back(v.get<std::uint64_t>());
      }
    }
  }
  std::string out;
  r.read("out", out);
  if (!out.empty()) c.out = out;

  r.read("total_classes", c.total_classes);
  r.read("first_task_classes", s.first_task_classes);
  r.read("incremental_tasks", s.incremental_tasks);
  r.read("first_task_iterations", s.first_task_iterations);
  r.read("later_task_iterations", s.later_task_iterations);
  r.read("batch_size", s.batch_size);
  r.read("replay", s.replay);
  r.read("cycles", s.n_cycles);
  r.read("temperature", s.temperature);
  r.read("learning_rate", s.adam.learning_rate);
  r.read("latent_dim", s.model.latent_dim);
  r.read("hidden", s.model.hidden);
  r.read("prior_init_std", s.model.prior_mean_init_std);

  std::string recon = "bce";
  r.read("recon", recon);
  if (recon == "bce") {
    s.recon = ReconKind::Bce;
  } else if (recon == "mse") {
    s.recon = ReconKind::Mse;
  } else {
    r.fail("recon", "must be \"bce\" or \"mse\"");
  }

  if (const json* w = r.child("weights")) {
    FieldReader wr(*w, "weights", errors);
    wr.read("recon", s.weights.recon);
    wr.read("latent", s.weights.latent);
    wr.read("class_ce", s.weights.class_ce);
    wr.read("distill", s.weights.distill);
    wr.read("latent_match", s.weights.latent_match);
    wr.read("latent_distill", s.weights.latent_distill);
    wr.reject_unknown();
  }
  bool latent_match = true, latent_distill = true;
  r.read("latent_match", latent_match);
  r.read("latent_distill", latent_distill);
  if (!latent_match) s.weights.latent_match = 0.0;
  if (!latent_distill) s.weights.latent_distill = 0.0;

  if (const json* m = r.child("metrics")) {
    FieldReader mr(*m, "metrics", errors);
    mr.read("frechet", s.eval.frechet);
    mr.read("prd", s.eval.prd);
    mr.read("prd_clusters", s.eval.prd_clusters);
    mr.read("prd_grid", s.eval.prd_grid);
    mr.read("generated_samples", s.eval.generated_samples);
    mr.read("pca_components", c.pca_components);
    mr.reject_unknown();
  }
  r.read("ablation", c.ablation);
  r.read("save_checkpoints", c.save_checkpoints);
  r.read("threads", c.threads);
  if (c.threads == 0) r.fail("threads", "must be positive");
  r.reject_unknown();

  // Scenario-level checks. total_classes may still be unknown (taken from
  // the dataset), so validate against a stand-in that is consistent.
  if (errors.empty()) {
    ScenarioConfig probe = s;
    probe.eval.pca_components = c.pca_components;
    if (c.total_classes != 0) {
      probe.total_classes = c.total_classes;
    } else if (c.dataset.synthetic) {
      probe.total_classes = c.dataset.synthetic->classes;
    } else {
      probe.total_classes = s.first_task_classes + s.incremental_tasks;  // divisibility unknown
    }
    try {
      probe.validate();
    } catch (const ConfigError& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
    throw ConfigError(msg);
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_experiment_config(doc, path.parent_path());
}

json experiment_config_to_json(const ExperimentConfig& c) {
  const ScenarioConfig& s = c.scenario;
  json dataset;
  if (c.dataset.path) dataset["path"] = c.dataset.path->string();
  if (c.dataset.synthetic) dataset["synthetic"] = synth_to_json(*c.dataset.synthetic);
  return {
      {"method", c.method},
      {"dataset", dataset},
      {"seeds", c.seeds},
      {"out", c.out.string()},
      {"total_classes", c.total_classes},
      {"first_task_classes", s.first_task_classes},
      {"incremental_tasks", s.incremental_tasks},
      {"first_task_iterations", s.first_task_iterations},
      {"later_task_iterations", s.later_task_iterations},
      {"batch_size", s.batch_size},
      {"replay", s.replay},
      {"cycles", s.n_cycles},
      {"temperature", s.temperature},
      {"learning_rate", s.adam.learning_rate},
      {"latent_dim", s.model.latent_dim},
      {"hidden", s.model.hidden},
      {"prior_init_std", s.model.prior_mean_init_std},
      {"recon", s.recon == ReconKind::Bce ? "bce" : "mse"},
      {"latent_match", s.weights.latent_match != 0.0},
      {"latent_distill", s.weights.latent_distill != 0.0},
      {"weights",
       {{"recon", s.weights.recon},
        {"latent", s.weights.latent},
        {"class_ce", s.weights.class_ce},
        {"distill", s.weights.distill},
        {"latent_match", s.weights.latent_match},
        {"latent_distill", s.weights.latent_distill}}},
      {"metrics",
       {{"frechet", s.eval.frechet},
        {"prd", s.eval.prd},
        {"prd_clusters", s.eval.prd_clusters},
        {"prd_grid", s.eval.prd_grid},
        {"generated_samples", s.eval.generated_samples},
        {"pca_components", c.pca_components}}},
      {"ablation", c.ablation},
      {"save_checkpoints", c.save_checkpoints},
      {"threads", c.threads},
  };
}

void apply_overrides(ExperimentConfig& c, const ConfigOverrides& o) {
  if (o.seeds) {
    if (o.seeds->empty()) throw ConfigError("seeds: at least one seed is required");
    c.seeds = *o.seeds;
  }
  if (o.out) c.out = *o.out;
  if (o.cycles) {
    if (*o.cycles < 0) throw ConfigError("cycles: must be >= 0");
    c.scenario.n_cycles = *o.cycles;
  }
  if (o.no_latent_match) c.scenario.weights.latent_match = 0.0;
  if (o.no_latent_distill) c.scenario.weights.latent_distill = 0.0;
  if (o.ablation) c.ablation = true;
  if (o.threads) {
    if (*o.threads == 0) throw ConfigError("threads: must be positive");
    c.threads = *o.threads;
  }
}

FeatureDataset load_dataset(const DatasetSource& source) {
  if (source.synthetic) return synth_gaussian_clusters(*source.synthetic);
  if (source.path) return load_features(*source.path);
  throw ConfigError("dataset: no source given");
}

std::vector<MetricRow> metric_rows(const MetricRecord& rec, double running_incremental) {
  std::vector<MetricRow> rows;
  rows.push_back({rec.task, "average_accuracy", rec.average_accuracy});
  rows.push_back({rec.task, "avg_incremental_accuracy", running_incremental});
  for (std::size_t j = 0; j < rec.task_accuracy.size(); ++j) {
    rows.push_back({rec.task, "acc_task" + std::to_string(j + 1), rec.task_accuracy[j]});
  }
  if (rec.frechet) rows.push_back({rec.task, "frechet", *rec.frechet});
  if (rec.prd) {
    rows.push_back({rec.task, "prd_f8", rec.prd->f8});
    rows.push_back({rec.task, "prd_f1_8", rec.prd->f1_8});
  }
  return rows;
}

std::vector<AggregateRow> aggregate(const std::vector<std::vector<MetricRow>>& per_seed) {
  std::vector<std::pair<int, std::string>> order;
  std::map<std::pair<int, std::string>, std::vector<double>> values;
  for (const auto& rows : per_seed) {
    for (const MetricRow& r : rows) {
      auto key = std::make_pair(r.task, r.metric);
      auto [it, inserted] = values.try_emplace(key);
      if (inserted) order.push_back(key);
      it->second.push_back(r.value);
    }
  }
  std::vector<AggregateRow> out;
  for (const auto& key : order) {
    const Stats s = stats(values[key]);
    out.push_back({key.first, key.second, s.mean, s.std, s.stderr_, s.n});
  }
  return out;
}

std::vector<AblationVariant> ablation_variants(const ExperimentConfig& config) {
  const int cycles = config.scenario.n_cycles > 0 ? config.scenario.n_cycles : 10;
  return {{"baseline", false, false, 0},
          {"latent_match", true, false, 0},
          {"latent_match_distill", true, true, 0},
          {"full_cycles", true, true, cycles}};
}

int run_experiment(const ExperimentConfig& config, std::ostream& log) {
  const FeatureDataset dataset = load_dataset(config.dataset);
  log << "dataset: " << dataset.size() << " samples, dim " << dataset.dim() << ", "
      << dataset.n_classes << " classes";
  if (!dataset.payload_checksum.empty()) log << ", payload " << dataset.payload_checksum;
  log << '\n';

  ExperimentConfig base = config;
  base.total_classes = config.total_classes != 0 ? config.total_classes : dataset.n_classes;
  base.scenario.total_classes = base.total_classes;
  base.scenario.validate();

  if (!config.ablation) {
    const auto outcomes = run_method(base, dataset, log);
    return std::all_of(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.ok; }) ? 0
                                                                                              : 1;
  }

  fs::create_directories(config.out);
  auto table = open_out(config.out / "ablation.csv");
  table << "variant,latent_match,latent_distill,n_cycles,avg_incremental_accuracy_mean,"
           "avg_incremental_accuracy_std,avg_incremental_accuracy_stderr,n\n";
  bool all_ok = true;
  for (const AblationVariant& v : ablation_variants(config)) {
    ExperimentConfig vc = base;
    vc.ablation = false;
    vc.method = v.name;
    vc.out = config.out / v.name;
    // Enabled terms keep the configured weight (1 when the config disabled them).
    auto weight = [](bool on, double configured) { return on ? (configured > 0.0 ? configured : 1.0) : 0.0; };
    vc.scenario.weights.latent_match = weight(v.latent_match, config.scenario.weights.latent_match);
    vc.scenario.weights.latent_distill =
        weight(v.latent_distill, config.scenario.weights.latent_distill);
    vc.scenario.n_cycles = v.n_cycles;
    vc.scenario.replay = true;
    const auto outcomes = run_method(vc, dataset, log);
    std::vector<double> aia;
    for (const auto& o : outcomes) {
      all_ok = all_ok && o.ok;
      if (o.ok) aia.push_back(o.avg_incremental_accuracy);
    }
    const Stats s = stats(aia);
    table << v.name << ',' << v.latent_match << ',' << v.latent_distill << ',' << v.n_cycles << ','
          << format_double(s.mean) << ',' << format_double(s.std) << ','
          << format_double(s.stderr_) << ',' << s.n << '\n';
    table.flush();
  }
  return all_ok ? 0 : 1;
}

ReportSummary report(const std::vector<fs::path>& dirs, const fs::path& out, std::ostream& log) {
  ReportSummary summary;
  std::vector<LoadedRun> runs;
  std::set<std::string> methods;
  for (const fs::path& given : dirs) {
    const auto expanded = expand_run_dirs(given);
    if (expanded.empty()) {
      summary.skipped.emplace_back(given, "not a run directory");
      log << "warning: " << given.string() << ": not a run directory, skipped\n";
      continue;
    }
    for (const fs::path& dir : expanded) {
      try {
        LoadedRun run = load_run(dir);
        if (methods.count(run.method)) {
          run.method += "@" + dir.filename().string();  // keep method names unique
        }
        methods.insert(run.method);
        runs.push_back(std::move(run));
        summary.processed.push_back(dir);
      } catch (const std::exception& e) {
        summary.skipped.emplace_back(dir, e.what());
        log << "warning: " << dir.string() << ": " << e.what() << ", skipped\n";
      }
    }
  }
  fs::create_directories(out);

  auto long_csv = open_out(out / "long.csv");
  long_csv << "method,seed,task,metric,value\n";
  auto comparison = open_out(out / "comparison.csv");
  comparison << "method,n_seeds,n_cycles,final_task,final_average_accuracy_mean,"
                "final_average_accuracy_std,avg_incremental_accuracy_mean,"
                "avg_incremental_accuracy_std,final_frechet_mean\n";
  auto prd_csv = open_out(out / "prd_long.csv");
  prd_csv << "method,task,precision,recall\n";

  // n_cycles -> task -> frechet values over seeds and methods
  std::map<int, std::map<int, std::vector<double>>> fd_by_cycles;

  for (const LoadedRun& run : runs) {
    int final_task = 0;
    for (const LoadedSeed& s : run.seeds) {
      for (const MetricRow& r : s.rows) {
        long_csv << run.method << ',' << s.seed << ',' << r.task << ',' << r.metric << ','
                 << format_double(r.value) << '\n';
        final_task = std::max(final_task, r.task);
        if (r.metric == "frechet") fd_by_cycles[run.n_cycles][r.task].push_back(r.value);
      }
    }
    auto final_values = [&](const std::string& metric) {
      std::vector<double> v;
      for (const LoadedSeed& s : run.seeds) {
        for (const MetricRow& r : s.rows) {
          if (r.task == final_task && r.metric == metric) v.push_back(r.value);
        }
      }
      return v;
    };
    const Stats acc = stats(final_values("average_accuracy"));
    const Stats aia = stats(final_values("avg_incremental_accuracy"));
    const auto fd = final_values("frechet");
    comparison << run.method << ',' << run.seeds.size() << ',' << run.n_cycles << ',' << final_task
               << ',' << format_double(acc.mean) << ',' << format_double(acc.std) << ','
               << format_double(aia.mean) << ',' << format_double(aia.std) << ','
               << (fd.empty() ? "" : format_double(stats(fd).mean)) << '\n';

    // Pointwise mean of the PRD curves over the seeds that have one.
    std::map<int, std::vector<const std::vector<std::pair<double, double>>*>> curves;
    for (const LoadedSeed& s : run.seeds) {
      for (const auto& [task, curve] : s.prd) curves[task].push_back(&curve);
    }
    for (const auto& [task, list] : curves) {
      const std::size_t n = list.front()->size();
      for (std::size_t i = 0; i < n; ++i) {
        double p = 0.0, rc = 0.0;
        std::size_t k = 0;
        for (const auto* c : list) {
          if (c->size() != n) continue;
          p += (*c)[i].first;
          rc += (*c)[i].second;
          ++k;
        }
        prd_csv << run.method << ',' << task << ',' << format_double(p / k) << ','
                << format_double(rc / k) << '\n';
      }
    }
  }

  if (fd_by_cycles.size() >= 2) {
    auto fd_csv = open_out(out / "fd_vs_cycles.csv");
    fd_csv << "n_cycles,task,frechet_mean,frechet_std,n\n";
    std::set<int> tasks;
    for (const auto& [_, by_task] : fd_by_cycles) {
      for (const auto& [task, __] : by_task) tasks.insert(task);
    }
    for (int task : tasks) {
      for (const auto& [cycles, by_task] : fd_by_cycles) {
        auto it = by_task.find(task);
        if (it == by_task.end()) continue;
        const Stats s = stats(it->second);
        fd_csv << cycles << ',' << task << ',' << format_double(s.mean) << ','
               << format_double(s.std) << ',' << s.n << '\n';
      }
    }
  }
  log << "report: " << summary.processed.size() << " run(s) merged, " << summary.skipped.size()
      << " skipped\n";
  return summary;
}

}  // namespace gfr
