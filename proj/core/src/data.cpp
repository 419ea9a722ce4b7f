// SPDX-License-Identifier: Apache-2.0
#include "gfr/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gfr/error.hpp"
#include "gfr/rng.hpp"

namespace gfr {
namespace {

namespace fs = std::filesystem;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

double get_f64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return std::bit_cast<double>(v);
}

template <class T>
T manifest_field(const nlohmann::json& doc, const char* key, const fs::path& path) {
  if (!doc.contains(key)) {
    throw FormatError(path.string() + ": manifest is missing header field '" + key + "'");
  }
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": manifest field '" + key + "': " + e.what());
  }
}

FeatureDataset load_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  bool any_line = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!any_line && line.rfind("label", 0) == 0) {
      any_line = true;
      continue;
    }
    any_line = true;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected label and at least one feature");
    }
    const std::size_t row_dim = cells.size() - 1;
    if (dim == 0) dim = row_dim;
    if (row_dim != dim) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": row has " +
                        std::to_string(row_dim) + " features, expected " + std::to_string(dim));
    }
    try {
      std::size_t used = 0;
      const long label = std::stol(cells[0], &used);
      if (used != cells[0].size() || label < 0) throw std::invalid_argument("label");
      labels.push_back(static_cast<int>(label));
      for (std::size_t j = 1; j < cells.size(); ++j) {
        values.push_back(std::stod(cells[j], &used));
        if (used != cells[j].size()) throw std::invalid_argument("feature");
      }
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  if (labels.empty()) {
    throw FormatError(path.string() + ": no samples (missing header or data rows)");
  }
  FeatureDataset ds;
  ds.features = Tensor({labels.size(), dim}, std::move(values));
  ds.n_classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  ds.labels = std::move(labels);
  ds.split = assign_splits(ds.labels, ds.n_classes, ds.split_fractions);
  return ds;
}

FeatureDataset load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw FormatError(path.string() + ": empty file, missing manifest header 'format'");
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": manifest is not valid JSON at byte " +
                      std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw FormatError(path.string() + ": manifest must be a JSON object");
  if (manifest_field<std::string>(doc, "format", path) != "gfr-features") {
    throw FormatError(path.string() + ": header field 'format' must be \"gfr-features\"");
  }
  if (manifest_field<std::string>(doc, "dtype", path) != "f64") {
    throw FormatError(path.string() + ": header field 'dtype' must be \"f64\"");
  }
  const auto n_samples = manifest_field<std::size_t>(doc, "n_samples", path);
  const auto dim = manifest_field<std::size_t>(doc, "dim", path);
  const auto n_classes = manifest_field<std::size_t>(doc, "n_classes", path);
  const auto payload_name = manifest_field<std::string>(doc, "payload", path);
  if (dim == 0) throw FormatError(path.string() + ": header field 'dim' must be positive");

  FeatureDataset ds;
  if (doc.contains("split")) {
    const auto& s = doc.at("split");
    ds.split_fractions.seed = manifest_field<std::uint64_t>(s, "seed", path);
    ds.split_fractions.train = manifest_field<double>(s, "train", path);
    ds.split_fractions.val = manifest_field<double>(s, "val", path);
    ds.split_fractions.test = manifest_field<double>(s, "test", path);
  }

  const fs::path payload_path = path.parent_path() / payload_name;
  std::ifstream pin(payload_path, std::ios::binary);
  if (!pin) throw FormatError("cannot open payload " + payload_path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(pin)),
                                         std::istreambuf_iterator<char>());
  const std::size_t row_bytes = 4 + 8 * dim;
  if (bytes.size() != n_samples * row_bytes) {
    throw FormatError(payload_path.string() + ": payload is " + std::to_string(bytes.size()) +
                      " bytes, manifest declares " + std::to_string(n_samples) + " rows of " +
                      std::to_string(row_bytes) + " bytes (dim mismatch?)");
  }
  const std::string checksum = payload_checksum(bytes);
  if (doc.contains("checksum") && doc.at("checksum").get<std::string>() != checksum) {
    throw FormatError(payload_path.string() + ": checksum mismatch, manifest " +
                      doc.at("checksum").get<std::string>() + " vs payload " + checksum);
  }

  ds.features = Tensor({n_samples, dim});
  ds.labels.resize(n_samples);
  ds.n_classes = n_classes;
  for (std::size_t r = 0; r < n_samples; ++r) {
    const unsigned char* row = bytes.data() + r * row_bytes;
    const std::uint32_t label = get_u32(row);
    if (label >= n_classes) {
      throw FormatError(payload_path.string() + ": row " + std::to_string(r) + " (byte offset " +
                        std::to_string(r * row_bytes) + ") has label " + std::to_string(label) +
                        " outside n_classes " + std::to_string(n_classes));
    }
    ds.labels[r] = static_cast<int>(label);
    for (std::size_t j = 0; j < dim; ++j) ds.features(r, j) = get_f64(row + 4 + 8 * j);
  }
  ds.payload_checksum = checksum;
  ds.split = assign_splits(ds.labels, ds.n_classes, ds.split_fractions);
  return ds;
}

}  // namespace

std::vector<std::size_t> FeatureDataset::indices(Split which, std::span<const int> classes) const {
  std::vector<std::uint8_t> wanted;
  if (!classes.empty()) {
    wanted.assign(n_classes, 0);
    for (int c : classes) {
      if (c >= 0 && static_cast<std::size_t>(c) < n_classes) wanted[c] = 1;
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (split[i] != which) continue;
    if (!wanted.empty() && !wanted[labels[i]]) continue;
    out.push_back(i);
  }
  return out;
}

void FeatureDataset::validate() const {
  if (features.rank() != 2 || features.rows() != labels.size() || split.size() != labels.size()) {
    throw FormatError("dataset: features, labels and split disagree in length");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) {
      throw FormatError("dataset: sample " + std::to_string(i) + " label " +
                        std::to_string(labels[i]) + " outside n_classes " +
                        std::to_string(n_classes));
    }
  }
  if (!features.all_finite()) throw FormatError("dataset: non-finite feature values");
}

std::vector<Split> assign_splits(std::span<const int> labels, std::size_t n_classes,
                                 const SplitFractions& fractions) {
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(labels[i]).push_back(i);
  std::vector<Split> split(labels.size(), Split::Test);
  Rng rng(mix_seed(fractions.seed, 0x5e11u));
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng.engine());
    const auto n = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::llround(fractions.train * n));
    const auto n_val =
        std::min(members.size() - n_train, static_cast<std::size_t>(std::llround(fractions.val * n)));
    for (std::size_t k = 0; k < members.size(); ++k) {
      split[members[k]] = k < n_train ? Split::Train : (k < n_train + n_val ? Split::Val : Split::Test);
    }
  }
  return split;
}

std::string payload_checksum(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

FeatureDataset load_features(const fs::path& path) {
  FeatureDataset ds = path.extension() == ".csv" ? load_csv(path) : load_manifest(path);
  ds.validate();
  return ds;
}

std::string save_features(const FeatureDataset& dataset, const fs::path& path) {
  dataset.validate();
  std::vector<unsigned char> bytes;
  bytes.reserve(dataset.size() * (4 + 8 * dataset.dim()));
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    put_u32(bytes, static_cast<std::uint32_t>(dataset.labels[r]));
    for (double v : dataset.features.row_span(r)) put_f64(bytes, v);
  }
  const std::string checksum = payload_checksum(bytes);
  fs::path payload = path;
  payload.replace_extension(".bin");

  nlohmann::json doc;
  doc["format"] = "gfr-features";
  doc["format_version"] = 1;
  doc["n_samples"] = dataset.size();
  doc["dim"] = dataset.dim();
  doc["n_classes"] = dataset.n_classes;
  doc["dtype"] = "f64";
  doc["payload"] = payload.filename().string();
  doc["checksum"] = checksum;
  doc["split"] = {{"seed", dataset.split_fractions.seed},
                  {"train", dataset.split_fractions.train},
                  {"val", dataset.split_fractions.val},
                  {"test", dataset.split_fractions.test}};

  std::ofstream pout(payload, std::ios::binary);
  if (!pout) throw FormatError("cannot write " + payload.string());
  pout.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  std::ofstream mout(path);
  if (!mout) throw FormatError("cannot write " + path.string());
  mout << doc.dump(2) << '\n';
  return checksum;
}

void save_features_csv(const FeatureDataset& dataset, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "label";
  for (std::size_t j = 0; j < dataset.dim(); ++j) out << ",f" << j;
  out << '\n';
  char buf[40];
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    out << dataset.labels[r];
    for (double v : dataset.features.row_span(r)) {
      std::snprintf(buf, sizeof buf, ",%.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

FeatureDataset normalize(const FeatureDataset& dataset) {
  const auto train = dataset.indices(Split::Train);
  if (train.empty()) throw ContractError("normalize: train split is empty");
  const std::size_t dim = dataset.dim();
  NormalizationRecord rec{std::vector<double>(dim, INFINITY), std::vector<double>(dim, -INFINITY)};
  for (std::size_t i : train) {
    auto row = dataset.features.row_span(i);
    for (std::size_t j = 0; j < dim; ++j) {
      rec.min[j] = std::min(rec.min[j], row[j]);
      rec.max[j] = std::max(rec.max[j], row[j]);
    }
  }
  return apply_normalization(dataset, rec);
}

FeatureDataset apply_normalization(const FeatureDataset& dataset,
                                   const NormalizationRecord& record) {
  const std::size_t dim = dataset.dim();
  if (record.min.size() != dim || record.max.size() != dim) {
    throw DimensionError("normalization record has " + std::to_string(record.min.size()) +
                         " dims, dataset has " + std::to_string(dim));
  }
  FeatureDataset out = dataset;
  for (std::size_t r = 0; r < out.size(); ++r) {
    auto row = out.features.row_span(r);
    for (std::size_t j = 0; j < dim; ++j) {
      const double range = record.max[j] - record.min[j];
      row[j] = range > 0.0 ? std::clamp((row[j] - record.min[j]) / range, 0.0, 1.0) : 0.5;
    }
  }
  out.normalization = record;
  return out;
}

FeatureDataset synth_gaussian_clusters(const SynthSpec& spec) {
  if (spec.classes == 0 || spec.dim == 0 || spec.per_class == 0) {
    throw ConfigError("synth: classes, dim and per_class must be positive");
  }
  Rng rng(spec.seed);
  Tensor means({spec.classes, spec.dim});
  for (std::size_t c = 0; c < spec.classes; ++c) {
    auto m = means.row_span(c);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : m) {
        v = rng.normal();
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : m) v *= spec.separation / norm;
  }
  FeatureDataset ds;
  ds.n_classes = spec.classes;
  ds.features = Tensor({spec.classes * spec.per_class, spec.dim});
  ds.labels.resize(spec.classes * spec.per_class);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t k = 0; k < spec.per_class; ++k) {
      const std::size_t r = c * spec.per_class + k;
      ds.labels[r] = static_cast<int>(c);
      auto row = ds.features.row_span(r);
      auto m = means.row_span(c);
      for (std::size_t j = 0; j < spec.dim; ++j) row[j] = m[j] + spec.sigma * rng.normal();
    }
  }
  ds.split_fractions.seed = spec.seed;
  ds.split = assign_splits(ds.labels, ds.n_classes, ds.split_fractions);
  return ds;
}

TaskSplit make_task_split(const FeatureDataset& dataset, const ScenarioConfig& scenario,
                          std::uint64_t seed) {
  scenario.validate();
  if (scenario.total_classes != dataset.n_classes) {
    throw ConfigError("total_classes: scenario has " + std::to_string(scenario.total_classes) +
                      " classes, dataset has " + std::to_string(dataset.n_classes));
  }
  std::vector<int> order(dataset.n_classes);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x7a5cu));
  std::shuffle(order.begin(), order.end(), rng.engine());

  TaskSplit split;
  std::size_t next = 0;
  auto take = [&](std::size_t n) {
    std::vector<int> cls(order.begin() + next, order.begin() + next + n);
    next += n;
    split.classes.push_back(std::move(cls));
  };
  take(scenario.first_task_classes);
  for (std::size_t t = 0; t < scenario.incremental_tasks; ++t) {
    take(scenario.classes_per_incremental_task());
  }
  for (const auto& cls : split.classes) {
    split.train.push_back(dataset.indices(Split::Train, cls));
    split.val.push_back(dataset.indices(Split::Val, cls));
    split.test.push_back(dataset.indices(Split::Test, cls));
  }
  return split;
}

}  // namespace gfr
