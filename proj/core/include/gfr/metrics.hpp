// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gfr/tensor.hpp"

namespace gfr {

inline constexpr double kCovarianceRidge = 1e-6;

/// Mean and (unbiased, ridge-regularized) covariance of a sample set.
struct GaussianFit {
  std::vector<double> mean;
  Tensor covariance;  // D x D, symmetric
};

GaussianFit fit_gaussian(const Tensor& samples, double ridge = kCovarianceRidge);

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2); negative
/// eigenvalues of the inner product are clamped to zero.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);
/// Fits both sets (>= 2 rows each, equal width) and compares the fits.
double frechet_distance(const Tensor& a, const Tensor& b);

// ---- precision / recall of distributions ----------------------------------

struct PRDCurve {
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t clusters = 0;

  std::size_t size() const { return precision.size(); }
};

/// Slopes lambda = tan(theta), theta uniform on [eps, pi/2 - eps].
std::vector<double> prd_slopes(std::size_t grid);

/// Histogram-level PRD. For each slope lambda:
///   precision(lambda) = sum_i min(lambda * P_i, Q_i)
///   recall(lambda)    = sum_i min(P_i, Q_i / lambda)
/// where P is the reference (real) histogram and Q the evaluated one.
PRDCurve prd_from_histograms(std::span<const double> reference, std::span<const double> evaluated,
                             std::size_t grid);

/// Clusters the union of both sets with k-means and compares the per-set
/// cluster histograms.
PRDCurve prd_curve(const Tensor& real, const Tensor& generated, std::size_t clusters,
                   std::size_t grid, std::uint64_t seed);

/// max over the curve of F_beta = (1 + b^2) p r / (b^2 p + r).
double prd_f_beta(const PRDCurve& curve, double beta);
/// Largest recall among points whose precision is >= 1 - tol.
double max_recall_at_full_precision(const PRDCurve& curve, double tol = 1e-9);

// ---- k-means ---------------------------------------------------------------

struct KMeansResult {
  Tensor centroids;  // K x D
  std::vector<std::size_t> assignment;
  double inertia = 0.0;
};

/// k-means++ seeding, Lloyd iterations; the best-inertia of `restarts` runs.
KMeansResult kmeans(const Tensor& samples, std::size_t k, std::uint64_t seed,
                    std::size_t restarts = 10, std::size_t max_iterations = 100);

// ---- PCA -------------------------------------------------------------------

struct PcaResult {
  Tensor projected;                       // samples x k
  Tensor components;                      // k x D, rows are unit eigenvectors
  std::vector<double> mean;
  std::vector<double> eigenvalues;        // all D, descending, clamped >= 0
  std::vector<double> explained_ratio;    // first k
};

PcaResult pca_project(const Tensor& samples, std::size_t k);

}  // namespace gfr
