// SPDX-License-Identifier: Apache-2.0
#include "gfr/scenario.hpp"

#include <string>

#include "gfr/error.hpp"

namespace gfr {

std::size_t ScenarioConfig::classes_per_incremental_task() const {
  if (incremental_tasks == 0) return 0;
  return (total_classes - first_task_classes) / incremental_tasks;
}

void ScenarioConfig::validate() const {
  if (total_classes == 0) throw ConfigError("total_classes: must be positive");
  if (first_task_classes == 0 || first_task_classes > total_classes) {
    throw ConfigError("first_task_classes: must be in [1, total_classes]");
  }
  const std::size_t rest = total_classes - first_task_classes;
  if (incremental_tasks == 0 && rest != 0) {
    throw ConfigError("incremental_tasks: 0 tasks cannot hold the remaining " +
                      std::to_string(rest) + " classes");
  }
  if (incremental_tasks > 0 && (rest == 0 || rest % incremental_tasks != 0)) {
    throw ConfigError("incremental_tasks: " + std::to_string(rest) +
                      " remaining classes do not split evenly into " +
                      std::to_string(incremental_tasks) + " tasks");
  }
  if (first_task_iterations < 0 || later_task_iterations < 0) {
    throw ConfigError("iterations: must be >= 0");
  }
  if (batch_size == 0) throw ConfigError("batch_size: must be positive");
  if (n_cycles < 0) throw ConfigError("n_cycles: must be >= 0");
  if (!(temperature > 0.0)) throw ConfigError("temperature: must be > 0");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning_rate: must be > 0");
  if (model.latent_dim == 0) throw ConfigError("latent_dim: must be positive");
  if (model.hidden == 0) throw ConfigError("hidden: must be positive");
  if (eval.prd && eval.prd_clusters < 2) throw ConfigError("prd_clusters: must be >= 2");
  if (eval.prd && eval.prd_grid < 2) throw ConfigError("prd_grid: must be >= 2");
  if (eval.pca_components > model.latent_dim) {
    throw ConfigError("pca_components: must not exceed latent_dim");
  }
}

}  // namespace gfr
