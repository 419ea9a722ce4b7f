// SPDX-License-Identifier: Apache-2.0
//
// gfr: class-incremental learning with generative feature replay.
//
//   gfr run --config exp.json [--seeds 1,2,3] [--out dir] [--cycles N]
//           [--no-latent-match] [--no-latent-distill] [--ablation] [--threads N]
//   gfr report <run-dir>... [--out dir]
//   gfr synth --classes C --dim N --per-class M --out data.json
//             [--separation S] [--sigma s] [--seed K]
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gfr/data.hpp"
#include "gfr/error.hpp"
#include "gfr/experiment.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

int cmd_run(const std::string& config_path, const std::string& seeds, const std::string& out,
            int cycles, bool have_cycles, bool no_match, bool no_distill, bool ablation,
            std::size_t threads) {
  gfr::ExperimentConfig config;
  try {
    config = gfr::load_experiment_config(config_path);
    gfr::ConfigOverrides o;
    if (!seeds.empty()) o.seeds = gfr::parse_seed_list(seeds);
    if (!out.empty()) o.out = out;
    if (have_cycles) o.cycles = cycles;
    o.no_latent_match = no_match;
    o.no_latent_distill = no_distill;
    o.ablation = ablation;
    if (threads > 0) o.threads = threads;
    gfr::apply_overrides(config, o);
  } catch (const gfr::ConfigError& e) {
    std::cerr << "config error:\n" << e.what() << '\n';
    return kExitConfig;
  }
  try {
    return gfr::run_experiment(config, std::cout);
  } catch (const gfr::ConfigError& e) {
    std::cerr << "config error:\n" << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out) {
  try {
    std::vector<std::filesystem::path> paths(dirs.begin(), dirs.end());
    const auto summary = gfr::report(paths, out, std::cerr);
    return summary.processed.empty() ? kExitRuntime : 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_synth(const gfr::SynthSpec& spec, const std::string& out) {
  try {
    const gfr::FeatureDataset ds = gfr::synth_gaussian_clusters(spec);
    const std::filesystem::path path(out);
    if (path.extension() == ".csv") {
      gfr::save_features_csv(ds, path);
      std::cout << "wrote " << path.string() << '\n';
    } else {
      const std::string checksum = gfr::save_features(ds, path);
      std::cout << "wrote " << path.string() << " (" << checksum << ")\n";
    }
    return 0;
  } catch (const gfr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-incremental learning with generative feature replay"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Train and evaluate over one or more seeds");
  std::string config_path, seeds, run_out;
  int cycles = 0;
  bool no_match = false, no_distill = false, ablation = false;
  std::size_t threads = 0;
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--seeds", seeds, "Comma-separated seed list, e.g. 1,2,3");
  run->add_option("--out", run_out, "Output directory");
  auto* cycles_opt = run->add_option("--cycles", cycles, "Number of replay cycles");
  run->add_flag("--no-latent-match", no_match, "Disable latent matching");
  run->add_flag("--no-latent-distill", no_distill, "Disable latent distillation");
  run->add_flag("--ablation", ablation, "Run the four-variant ablation sweep");
  run->add_option("--threads", threads, "Seeds run concurrently");

  auto* rep = app.add_subcommand("report", "Merge run directories into plot-ready CSV files");
  std::vector<std::string> dirs;
  std::string report_out = "report";
  rep->add_option("dirs", dirs, "Run directories")->required();
  rep->add_option("--out", report_out, "Output directory");

  auto* synth = app.add_subcommand("synth", "Write a synthetic Gaussian-cluster feature file");
  gfr::SynthSpec spec;
  std::string synth_out;
  synth->add_option("--classes", spec.classes, "Number of classes")->required();
  synth->add_option("--dim", spec.dim, "Feature dimension")->required();
  synth->add_option("--per-class", spec.per_class, "Samples per class")->required();
  synth->add_option("--out", synth_out, "Output manifest (.json) or CSV (.csv)")->required();
  synth->add_option("--separation", spec.separation, "Radius of the class-mean sphere");
  synth->add_option("--sigma", spec.sigma, "Within-class standard deviation");
  synth->add_option("--seed", spec.seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (*run) {
    return cmd_run(config_path, seeds, run_out, cycles, cycles_opt->count() > 0, no_match,
                   no_distill, ablation, threads);
  }
  if (*rep) return cmd_report(dirs, report_out);
  return cmd_synth(spec, synth_out);
}
