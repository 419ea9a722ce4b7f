// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gfr/tensor.hpp"

namespace gfr {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moments per parameter tensor plus the step counter.
struct AdamState {
  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;

  AdamState() = default;
  /// Zero moments shaped like `params`.
  AdamState(AdamConfig cfg, std::span<const Tensor* const> params);
};

/// One bias-corrected Adam update, in place. Throws DimensionError when
/// params, grads and state disagree in count or shape.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace gfr
