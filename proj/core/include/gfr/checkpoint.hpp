// SPDX-License-Identifier: Apache-2.0
//
// Model checkpoints as a single JSON document:
//
//   {
//     "format": "gfr-checkpoint", "format_version": 1,
//     "config": {"input_dim": N, "latent_dim": D, "hidden": H, "n_classes": C,
//                "sigmoid_output": b, "prior_mean_init_std": "<hex>"},
//     "task": t, "seen": [...], "prior_active": [0|1, ...],
//     "tensors": {"encoder.hidden.weight": {"shape": [...], "data": "<hex>"}, ...}
//   }
//
// Each double is written as the 16 lowercase hex digits of its IEEE-754 bit
// pattern (big-endian digit order), so load(save(s)) is bit-exact.
#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "gfr/model.hpp"

namespace gfr {

inline constexpr int kCheckpointFormatVersion = 1;

std::string encode_hex_doubles(std::span<const double> values);
std::vector<double> decode_hex_doubles(const std::string& hex);

nlohmann::json checkpoint_to_json(const ModelState& state);
ModelState checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace gfr
