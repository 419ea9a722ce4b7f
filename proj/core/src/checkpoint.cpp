// SPDX-License-Identifier: Apache-2.0
#include "gfr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "gfr/error.hpp"

namespace gfr {
namespace {

const char* const kTensorNames[] = {
    "encoder.hidden.weight", "encoder.hidden.bias", "encoder.out.weight", "encoder.out.bias",
    "decoder.hidden.weight", "decoder.hidden.bias", "decoder.out.weight", "decoder.out.bias",
    "classifier.out.weight", "classifier.out.bias", "prior.means",        "prior.log_std"};

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

template <class T>
T field(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key)) throw FormatError(std::string("checkpoint: missing field '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: field '") + key + "': " + e.what());
  }
}

}  // namespace

std::string encode_hex_doubles(std::span<const double> values) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(values.size() * 16);
  for (double v : values) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int shift = 60; shift >= 0; shift -= 4) out.push_back(kDigits[(bits >> shift) & 0xF]);
  }
  return out;
}

std::vector<double> decode_hex_doubles(const std::string& hex) {
  if (hex.size() % 16 != 0) throw FormatError("hex payload length is not a multiple of 16");
  std::vector<double> out(hex.size() / 16);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (std::size_t k = 0; k < 16; ++k) {
      const int d = hex_value(hex[i * 16 + k]);
      if (d < 0) throw FormatError("invalid hex digit at offset " + std::to_string(i * 16 + k));
      bits = (bits << 4) | static_cast<std::uint64_t>(d);
    }
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

nlohmann::json checkpoint_to_json(const ModelState& state) {
  nlohmann::json doc;
  doc["format"] = "gfr-checkpoint";
  doc["format_version"] = kCheckpointFormatVersion;
  doc["config"] = {{"input_dim", state.config.input_dim},
                   {"latent_dim", state.config.latent_dim},
                   {"hidden", state.config.hidden},
                   {"n_classes", state.config.n_classes},
                   {"sigmoid_output", state.config.sigmoid_output},
                   {"prior_mean_init_std", encode_hex_doubles(std::span(
                                               &state.config.prior_mean_init_std, 1))}};
  doc["task"] = state.task;
  doc["seen"] = state.seen;
  doc["prior_active"] = state.prior.active;
  auto params = state.parameters();
  nlohmann::json tensors = nlohmann::json::object();
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors[kTensorNames[i]] = {{"shape", params[i]->shape()},
                                {"data", encode_hex_doubles(params[i]->data())}};
  }
  doc["tensors"] = std::move(tensors);
  return doc;
}

ModelState checkpoint_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw FormatError("checkpoint: document is not an object");
  if (field<std::string>(doc, "format") != "gfr-checkpoint") {
    throw FormatError("checkpoint: unexpected 'format'");
  }
  const int version = field<int>(doc, "format_version");
  if (version != kCheckpointFormatVersion) {
    throw FormatError("checkpoint: unsupported format_version " + std::to_string(version));
  }
  const auto cfg = field<nlohmann::json>(doc, "config");
  ModelState s;
  s.config.input_dim = field<std::size_t>(cfg, "input_dim");
  s.config.latent_dim = field<std::size_t>(cfg, "latent_dim");
  s.config.hidden = field<std::size_t>(cfg, "hidden");
  s.config.n_classes = field<std::size_t>(cfg, "n_classes");
  s.config.sigmoid_output = field<bool>(cfg, "sigmoid_output");
  s.decoder.sigmoid_output = s.config.sigmoid_output;
  const auto init_std = decode_hex_doubles(field<std::string>(cfg, "prior_mean_init_std"));
  if (init_std.size() != 1) throw FormatError("checkpoint: bad prior_mean_init_std");
  s.config.prior_mean_init_std = init_std[0];
  s.task = field<int>(doc, "task");
  s.seen = field<std::vector<int>>(doc, "seen");
  s.prior.active = field<std::vector<std::uint8_t>>(doc, "prior_active");

  const auto tensors = field<nlohmann::json>(doc, "tensors");
  auto params = s.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!tensors.contains(kTensorNames[i])) {
      throw FormatError(std::string("checkpoint: missing tensor '") + kTensorNames[i] + "'");
    }
    const auto& t = tensors.at(kTensorNames[i]);
    try {
      *params[i] =
          Tensor(field<Shape>(t, "shape"), decode_hex_doubles(field<std::string>(t, "data")));
    } catch (const DimensionError& e) {
      throw FormatError(std::string("checkpoint: tensor '") + kTensorNames[i] + "': " + e.what());
    }
  }
  if (s.prior.active.size() != s.config.n_classes) {
    throw FormatError("checkpoint: prior table does not match config");
  }
  const std::size_t n = s.config.input_dim, d = s.config.latent_dim, h = s.config.hidden,
                    c = s.config.n_classes;
  const Shape expected[] = {{n, h}, {1, h}, {h, 2 * d}, {1, 2 * d}, {d, h}, {1, h},
                            {h, n}, {1, n}, {d, c},     {1, c},     {c, d}, {c, d}};
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != expected[i]) {
      throw FormatError(std::string("checkpoint: tensor '") + kTensorNames[i] + "' has shape " +
                        to_string(params[i]->shape()) + ", config implies " +
                        to_string(expected[i]));
    }
  }
  return s;
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(state).dump() << '\n';
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace gfr
