// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "gfr/tensor.hpp"

namespace gfr {

/// Seeded generator threaded explicitly through every stochastic op.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  /// rows x cols matrix of N(0, 1) draws.
  Tensor normal_matrix(std::size_t rows, std::size_t cols);

  /// Independent stream derived from this generator's seed and a label,
  /// without consuming draws from this generator.
  Rng derive(std::string_view label) const;
  Rng derive(std::uint64_t label) const;

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace gfr
