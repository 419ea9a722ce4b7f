// SPDX-License-Identifier: Apache-2.0
//
// Feature datasets: file formats, normalization, synthetic generation and
// class-incremental task splits.
//
// Binary format. A JSON manifest
//
//   {"format": "gfr-features", "format_version": 1,
//    "n_samples": S, "dim": N, "n_classes": C, "dtype": "f64",
//    "payload": "<file name, relative to the manifest>",
//    "checksum": "fnv1a64:<16 hex digits>",
//    "split": {"seed": s, "train": 0.8, "val": 0.1, "test": 0.1}}   // optional
//
// next to a payload of S rows, each a little-endian uint32 class id followed
// by N little-endian IEEE-754 doubles. The checksum covers the payload bytes.
//
// CSV format. One sample per line, `label,f0,...,f{N-1}`; an optional first
// line starting with `label` is a header. n_classes is max(label) + 1.
//
// Split assignment is not stored per sample: it is recomputed from the
// manifest's split record (default seed 0, 80/10/10), stratified by class.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gfr/scenario.hpp"
#include "gfr/tensor.hpp"

namespace gfr {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
};

/// Per-dimension affine map fitted on the train split.
struct NormalizationRecord {
  std::vector<double> min;
  std::vector<double> max;
};

struct FeatureDataset {
  Tensor features;  // samples x N
  std::vector<int> labels;
  std::vector<Split> split;
  std::size_t n_classes = 0;
  SplitFractions split_fractions;
  std::optional<NormalizationRecord> normalization;
  /// "fnv1a64:<hex>" of the payload this dataset was loaded from or saved to.
  std::string payload_checksum;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.rank() == 2 ? features.cols() : 0; }

  /// Sample indices in `split` whose label is in `classes` (all when empty).
  std::vector<std::size_t> indices(Split which, std::span<const int> classes = {}) const;

  /// Throws FormatError if any invariant is broken.
  void validate() const;
};

/// Stratified assignment: within each class, a seeded shuffle puts the first
/// round(train * n) samples in Train, the next round(val * n) in Val, the
/// rest in Test.
std::vector<Split> assign_splits(std::span<const int> labels, std::size_t n_classes,
                                 const SplitFractions& fractions);

std::string payload_checksum(std::span<const unsigned char> bytes);

/// Dispatches on extension: `.csv` is CSV, anything else a JSON manifest.
FeatureDataset load_features(const std::filesystem::path& path);
/// Writes `<path>` (manifest) and `<stem>.bin` beside it; returns the
/// payload checksum.
std::string save_features(const FeatureDataset& dataset, const std::filesystem::path& path);
void save_features_csv(const FeatureDataset& dataset, const std::filesystem::path& path);

/// Fits min-max on the train split and maps every split into [0, 1].
/// Constant dimensions map to 0.5.
FeatureDataset normalize(const FeatureDataset& dataset);
FeatureDataset apply_normalization(const FeatureDataset& dataset,
                                   const NormalizationRecord& record);

struct SynthSpec {
  std::size_t classes = 10;
  std::size_t dim = 32;
  std::size_t per_class = 200;
  double separation = 4.0;
  double sigma = 1.0;
  std::uint64_t seed = 0;
};

/// Class means on the sphere of radius `separation`, samples N(mean, sigma^2 I),
/// split 80/10/10.
FeatureDataset synth_gaussian_clusters(const SynthSpec& spec);

struct TaskSplit {
  std::vector<std::vector<int>> classes;  // per task, in task order
  std::vector<std::vector<std::size_t>> train, val, test;  // sample indices per task

  std::size_t task_count() const { return classes.size(); }
};

/// Seeded shuffle of class ids, then partitioned per scenario.
TaskSplit make_task_split(const FeatureDataset& dataset, const ScenarioConfig& scenario,
                          std::uint64_t seed);

}  // namespace gfr
