// SPDX-License-Identifier: Apache-2.0
#include "gfr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "gfr/error.hpp"
#include "gfr/rng.hpp"

namespace gfr {
namespace {

using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> view(const Tensor& t) {
  return {t.data().data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

Tensor to_tensor(const Matrix& m) {
  Tensor out({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  }
  return out;
}

Matrix sym_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

KMeansResult lloyd(const Tensor& x, std::size_t k, Rng& rng, std::size_t max_iterations) {
  const std::size_t n = x.rows(), dim = x.cols();
  Tensor centroids({k, dim});
  // k-means++ seeding
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.index(n);
  std::copy_n(x.row_span(first).begin(), dim, centroids.row_span(0).begin());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(x.row_span(i), centroids.row_span(c - 1)));
      total += nearest[i];
    }
    std::size_t pick = rng.index(n);
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        target -= nearest[i];
        if (target <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    std::copy_n(x.row_span(pick).begin(), dim, centroids.row_span(c).begin());
  }

  std::vector<std::size_t> assignment(n, 0);
  double inertia = 0.0;
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    bool changed = iter == 0;
    inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(x.row_span(i), centroids.row_span(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assignment[i] != best) changed = true;
      assignment[i] = best;
      inertia += best_d;
    }
    if (!changed) break;
    Tensor sums({k, dim});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = sums.row_span(assignment[i]);
      auto src = x.row_span(i);
      for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
      ++counts[assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // keep the previous centroid
      auto dst = centroids.row_span(c);
      auto src = sums.row_span(c);
      for (std::size_t j = 0; j < dim; ++j) dst[j] = src[j] / static_cast<double>(counts[c]);
    }
  }
  return {std::move(centroids), std::move(assignment), inertia};
}

}  // namespace

GaussianFit fit_gaussian(const Tensor& samples, double ridge) {
  if (samples.rank() != 2 || samples.rows() < 2) {
    throw DimensionError("fit_gaussian: need at least 2 samples, got shape " +
                         to_string(samples.shape()));
  }
  const auto x = view(samples);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const RowMatrix centered = x.rowwise() - mu;
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(samples.rows() - 1);
  cov = 0.5 * (cov + cov.transpose());
  cov.diagonal().array() += ridge;
  return {std::vector<double>(mu.data(), mu.data() + mu.size()), to_tensor(cov)};
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  if (a.mean.size() != b.mean.size()) {
    throw DimensionError("frechet_distance: dimension " + std::to_string(a.mean.size()) +
                         " vs " + std::to_string(b.mean.size()));
  }
  double mean_term = 0.0;
  for (std::size_t j = 0; j < a.mean.size(); ++j) {
    const double d = a.mean[j] - b.mean[j];
    mean_term += d * d;
  }
  const auto ca = view(a.covariance);
  const auto cb = view(b.covariance);
  const Matrix root_a = sym_sqrt(ca);
  Matrix inner = root_a * cb * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(inner, Eigen::EigenvaluesOnly);
  const double trace_root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return mean_term + ca.trace() + cb.trace() - 2.0 * trace_root;
}

double frechet_distance(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw DimensionError("frechet_distance: shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  return frechet_distance(fit_gaussian(a), fit_gaussian(b));
}

std::vector<double> prd_slopes(std::size_t grid) {
  if (grid < 2) throw ContractError("prd: grid needs at least 2 points");
  constexpr double eps = 1e-10;
  const double lo = eps, hi = std::numbers::pi / 2 - eps;
  std::vector<double> slopes(grid);
  for (std::size_t i = 0; i < grid; ++i) {
    const double theta = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid - 1);
    slopes[i] = std::tan(theta);
  }
  return slopes;
}

PRDCurve prd_from_histograms(std::span<const double> reference, std::span<const double> evaluated,
                             std::size_t grid) {
  if (reference.size() != evaluated.size() || reference.empty()) {
    throw DimensionError("prd: histogram sizes " + std::to_string(reference.size()) + " vs " +
                         std::to_string(evaluated.size()));
  }
  PRDCurve curve;
  curve.clusters = reference.size();
  for (double slope : prd_slopes(grid)) {
    double p = 0.0, r = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
      p += std::min(slope * reference[i], evaluated[i]);
      r += std::min(reference[i], evaluated[i] / slope);
    }
    curve.precision.push_back(std::clamp(p, 0.0, 1.0));
    curve.recall.push_back(std::clamp(r, 0.0, 1.0));
  }
  return curve;
}

PRDCurve prd_curve(const Tensor& real, const Tensor& generated, std::size_t clusters,
                   std::size_t grid, std::uint64_t seed) {
  if (real.rank() != 2 || generated.rank() != 2 || real.rows() == 0 || generated.rows() == 0) {
    throw ContractError("prd: both sample sets must be non-empty matrices");
  }
  if (real.cols() != generated.cols()) {
    throw DimensionError("prd: widths " + std::to_string(real.cols()) + " vs " +
                         std::to_string(generated.cols()));
  }
  if (clusters < 2) throw ContractError("prd: need at least 2 clusters");
  const Tensor both[] = {real, generated};
  const Tensor pooled = vstack(both);
  const std::size_t k = std::min(clusters, pooled.rows());
  const KMeansResult km = kmeans(pooled, k, seed);
  std::vector<double> p(k, 0.0), q(k, 0.0);
  for (std::size_t i = 0; i < real.rows(); ++i) p[km.assignment[i]] += 1.0;
  for (std::size_t i = 0; i < generated.rows(); ++i) q[km.assignment[real.rows() + i]] += 1.0;
  for (double& v : p) v /= static_cast<double>(real.rows());
  for (double& v : q) v /= static_cast<double>(generated.rows());
  PRDCurve curve = prd_from_histograms(p, q, grid);
  curve.clusters = k;
  return curve;
}

double prd_f_beta(const PRDCurve& curve, double beta) {
  const double b2 = beta * beta;
  double best = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double p = curve.precision[i], r = curve.recall[i];
    if (p <= 0.0 && r <= 0.0) continue;
    best = std::max(best, (1.0 + b2) * p * r / (b2 * p + r));
  }
  return best;
}

double max_recall_at_full_precision(const PRDCurve& curve, double tol) {
  double best = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve.precision[i] >= 1.0 - tol) best = std::max(best, curve.recall[i]);
  }
  return best;
}

KMeansResult kmeans(const Tensor& samples, std::size_t k, std::uint64_t seed,
                    std::size_t restarts, std::size_t max_iterations) {
  if (samples.rank() != 2 || samples.rows() == 0) {
    throw ContractError("kmeans: empty sample set");
  }
  if (k == 0 || k > samples.rows()) {
    throw ContractError("kmeans: k = " + std::to_string(k) + " with " +
                        std::to_string(samples.rows()) + " samples");
  }
  Rng rng(mix_seed(seed, 0x6b6du));
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < std::max<std::size_t>(restarts, 1); ++r) {
    KMeansResult run = lloyd(samples, k, rng, max_iterations);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

PcaResult pca_project(const Tensor& samples, std::size_t k) {
  if (samples.rank() != 2 || samples.rows() < 2) {
    throw ContractError("pca: need at least 2 samples");
  }
  const std::size_t dim = samples.cols();
  if (k > dim) {
    throw ContractError("pca: k = " + std::to_string(k) + " exceeds dimension " +
                        std::to_string(dim));
  }
  const auto x = view(samples);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const RowMatrix centered = x.rowwise() - mu;
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(samples.rows() - 1);
  cov = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);

  // Eigen returns ascending eigenvalues.
  PcaResult out;
  out.mean.assign(mu.data(), mu.data() + mu.size());
  double total = 0.0;
  for (Eigen::Index i = static_cast<Eigen::Index>(dim); i-- > 0;) {
    const double lambda = std::max(0.0, eig.eigenvalues()(i));
    out.eigenvalues.push_back(lambda);
    total += lambda;
  }
  Matrix basis(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(k));
  for (std::size_t c = 0; c < k; ++c) {
    basis.col(static_cast<Eigen::Index>(c)) =
        eig.eigenvectors().col(static_cast<Eigen::Index>(dim - 1 - c));
    out.explained_ratio.push_back(total > 0.0 ? out.eigenvalues[c] / total : 0.0);
  }
  out.components = to_tensor(basis.transpose());
  out.projected = to_tensor(centered * basis);
  return out;
}

}  // namespace gfr
