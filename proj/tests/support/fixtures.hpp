// SPDX-License-Identifier: Apache-2.0
//
// Small deterministic models and datasets shared by the tests.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gfr/data.hpp"
#include "gfr/model.hpp"
#include "gfr/rng.hpp"

namespace gfr::testing {

/// A randomly initialized model with classes `seen` active. Non-zero biases
/// and prior log stds make the instance generic.
inline ModelState small_model(std::uint64_t seed, std::size_t input_dim = 5,
                              std::size_t latent_dim = 3, std::size_t hidden = 6,
                              std::size_t n_classes = 4, std::vector<int> seen = {0, 1, 2},
                              bool sigmoid_output = true) {
  Rng rng(seed);
  ModelConfig config;
  config.input_dim = input_dim;
  config.latent_dim = latent_dim;
  config.hidden = hidden;
  config.n_classes = n_classes;
  config.prior_mean_init_std = 1.0;
  config.sigmoid_output = sigmoid_output;
  ModelState state = init_model(config, rng);
  state.add_classes(seen, rng);
  for (Tensor* p : state.parameters()) {
    if (p == &state.prior.means) continue;
    if (p == &state.prior.log_std) {
      for (double& v : p->data()) v = 0.3 * rng.normal();
    } else if (p->rank() == 2 && p->rows() == 1) {
      for (double& v : p->data()) v = 0.1 * rng.normal();
    }
  }
  return state;
}

/// Uniform [0, 1) feature matrix.
inline Tensor unit_features(Rng& rng, std::size_t rows, std::size_t cols) {
  Tensor x({rows, cols});
  for (double& v : x.data()) v = rng.uniform();
  return x;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gfr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace gfr::testing
