// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gfr/error.hpp"
#include "gfr/metrics.hpp"
#include "gfr/rng.hpp"
#include "oracles.hpp"

namespace gfr {
namespace {

Tensor gaussian_samples(Rng& rng, std::size_t n, const std::vector<double>& mean,
                        const std::vector<double>& sd) {
  Tensor t({n, mean.size()});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < mean.size(); ++j) t(r, j) = mean[j] + sd[j] * rng.normal();
  }
  return t;
}

// ---- Fréchet distance --------------------------------------------------------

TEST(Frechet, IdenticalSetsGiveZero) {
  Rng rng(1);
  Tensor a = gaussian_samples(rng, 500, {0, 1, 2}, {1, 2, 0.5});
  EXPECT_LE(std::abs(frechet_distance(a, a)), 1e-6);
}

TEST(Frechet, MeanShiftWithEqualCovariances) {
  Rng rng(2);
  Tensor a = gaussian_samples(rng, 100000, {0, 0, 0, 0}, {1, 1, 1, 1});
  Tensor b = gaussian_samples(rng, 100000, {1, 0, 0, 0}, {1, 1, 1, 1});
  EXPECT_NEAR(frechet_distance(a, b), 1.0, 0.05);
}

TEST(Frechet, DiagonalCovariancesMatchClosedForm) {
  GaussianFit a{{0.5, -1.0, 2.0}, Tensor::matrix({{4, 0, 0}, {0, 1, 0}, {0, 0, 0.25}})};
  GaussianFit b{{0.5, -1.0, 2.0}, Tensor::matrix({{1, 0, 0}, {0, 9, 0}, {0, 0, 0.25}})};
  const double expected = oracle::frechet_diagonal(a.mean, {4, 1, 0.25}, b.mean, {1, 9, 0.25});
  EXPECT_NEAR(expected, 1.0 + 4.0, 1e-12);
  EXPECT_NEAR(frechet_distance(a, b), expected, 1e-9);
  GaussianFit c{{1.5, 0.0, 2.0}, b.covariance};
  EXPECT_NEAR(frechet_distance(a, c),
              oracle::frechet_diagonal(a.mean, {4, 1, 0.25}, c.mean, {1, 9, 0.25}), 1e-9);
}

TEST(Frechet, SymmetricInArguments) {
  Rng rng(3);
  Tensor a = gaussian_samples(rng, 300, {0, 1}, {1, 3});
  Tensor b = gaussian_samples(rng, 400, {2, 0}, {0.5, 1});
  EXPECT_NEAR(frechet_distance(a, b), frechet_distance(b, a), 1e-8);
}

TEST(Frechet, FitIsRidgedAndSymmetric) {
  Tensor one_direction = Tensor::matrix({{0, 0}, {1, 0}, {2, 0}});
  GaussianFit f = fit_gaussian(one_direction);
  EXPECT_NEAR(f.mean[0], 1.0, 1e-15);
  EXPECT_NEAR(f.covariance(0, 0), 1.0 + kCovarianceRidge, 1e-15);
  EXPECT_NEAR(f.covariance(1, 1), kCovarianceRidge, 1e-18);
  EXPECT_EQ(f.covariance(0, 1), f.covariance(1, 0));
}

TEST(Frechet, Contracts) {
  EXPECT_THROW(frechet_distance(Tensor::zeros(1, 2), Tensor::zeros(5, 2)), DimensionError);
  EXPECT_THROW(frechet_distance(Tensor::zeros(5, 2), Tensor::zeros(5, 3)), DimensionError);
}

// ---- PRD ---------------------------------------------------------------------------

TEST(Prd, SlopesSpanTheQuarterCircle) {
  const auto s = prd_slopes(101);
  EXPECT_EQ(s.size(), 101u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_NEAR(s[50], 1.0, 1e-9);
  EXPECT_GT(s.front(), 0.0);
  EXPECT_THROW(prd_slopes(1), ContractError);
}

TEST(Prd, HalfHalfAgainstPointMass) {
  const std::size_t grid = 1001;
  const std::vector<double> p{0.5, 0.5}, q{1.0, 0.0};
  PRDCurve c = prd_from_histograms(p, q, grid);
  // Grid resolution at the corner lambda = 2: the recall step between the
  // two slopes that bracket it.
  const auto slopes = prd_slopes(grid);
  const auto hi = std::lower_bound(slopes.begin(), slopes.end(), 2.0);
  const double resolution = 1.0 / *(hi - 1) - 1.0 / *hi;
  EXPECT_NEAR(max_recall_at_full_precision(c), 0.5, resolution + 1e-12);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_GE(c.precision[i], 0.0);
    EXPECT_LE(c.precision[i], 1.0);
    EXPECT_LE(c.recall[i], 0.5 + 1e-12);
  }
}

TEST(Prd, IdenticalHistogramsReachTheCorner) {
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
  PRDCurve c = prd_from_histograms(p, p, 1001);
  double best = 1.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    best = std::min(best, std::hypot(1 - c.precision[i], 1 - c.recall[i]));
  }
  EXPECT_LT(best, 1e-9);
}

TEST(Prd, IdenticalSampleSetsNearTheCorner) {
  Rng rng(4);
  const std::size_t n = 2000;
  Tensor a = gaussian_samples(rng, n, {0, 0, 0}, {1, 1, 1});
  PRDCurve c = prd_curve(a, a, 20, 1001, 7);
  double best = 1.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    best = std::min(best, std::hypot(1 - c.precision[i], 1 - c.recall[i]));
  }
  EXPECT_LE(best, 1.0 / std::sqrt(static_cast<double>(n)));
  EXPECT_EQ(c.clusters, 20u);
}

TEST(Prd, DisjointSupportsGiveZero) {
  Rng rng(5);
  Tensor real = gaussian_samples(rng, 300, {0, 0}, {0.1, 0.1});
  Tensor fake = gaussian_samples(rng, 300, {100, 100}, {0.1, 0.1});
  PRDCurve c = prd_curve(real, fake, 2, 101, 1);
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_NEAR(c.precision[i], 0.0, 1e-12);
    EXPECT_NEAR(c.recall[i], 0.0, 1e-12);
  }
}

TEST(Prd, DeterministicGivenSeed) {
  Rng rng(6);
  Tensor a = gaussian_samples(rng, 200, {0, 0}, {1, 1});
  Tensor b = gaussian_samples(rng, 200, {0.5, 0}, {1, 2});
  PRDCurve c1 = prd_curve(a, b, 10, 201, 42);
  PRDCurve c2 = prd_curve(a, b, 10, 201, 42);
  EXPECT_EQ(c1.precision, c2.precision);
  EXPECT_EQ(c1.recall, c2.recall);
}

TEST(Prd, FBetaSummaries) {
  const std::vector<double> p{0.5, 0.5}, q{1.0, 0.0};
  PRDCurve c = prd_from_histograms(p, q, 1001);
  // High precision is cheap here (mode dropping), recall is capped at 0.5:
  // the precision-weighted score beats the recall-weighted one.
  EXPECT_GT(prd_f_beta(c, 1.0 / 8.0), prd_f_beta(c, 8.0));
  const std::vector<double> same{0.25, 0.75};
  EXPECT_NEAR(prd_f_beta(prd_from_histograms(same, same, 1001), 8.0), 1.0, 1e-9);
}

TEST(Prd, Contracts) {
  const std::vector<double> p{0.5, 0.5}, q{1.0};
  EXPECT_THROW(prd_from_histograms(p, q, 11), DimensionError);
  EXPECT_THROW(prd_curve(Tensor::zeros(0, 2), Tensor::zeros(3, 2), 2, 11, 0), ContractError);
  EXPECT_THROW(prd_curve(Tensor::zeros(3, 2), Tensor::zeros(3, 2), 1, 11, 0), ContractError);
}

// ---- k-means -----------------------------------------------------------------------

TEST(KMeans, RecoversSeparatedClusters) {
  Rng rng(7);
  std::vector<Tensor> parts{gaussian_samples(rng, 100, {0, 0}, {0.1, 0.1}),
                            gaussian_samples(rng, 100, {10, 0}, {0.1, 0.1}),
                            gaussian_samples(rng, 100, {0, 10}, {0.1, 0.1})};
  Tensor x = vstack(parts);
  KMeansResult r = kmeans(x, 3, 1);
  for (std::size_t block = 0; block < 3; ++block) {
    for (std::size_t i = 1; i < 100; ++i) {
      EXPECT_EQ(r.assignment[block * 100 + i], r.assignment[block * 100]);
    }
  }
  EXPECT_NE(r.assignment[0], r.assignment[100]);
  EXPECT_NE(r.assignment[100], r.assignment[200]);
  EXPECT_LT(r.inertia, 300 * 2 * 0.02);
}

TEST(KMeans, Contracts) {
  EXPECT_THROW(kmeans(Tensor::zeros(0, 2), 2, 0), ContractError);
  EXPECT_THROW(kmeans(Tensor::zeros(2, 2), 3, 0), ContractError);
}

// ---- PCA -----------------------------------------------------------------------------

TEST(Pca, LineDataHasOneComponent) {
  Tensor x({50, 2});
  for (std::size_t r = 0; r < 50; ++r) {
    x(r, 0) = static_cast<double>(r);
    x(r, 1) = 2.0 * static_cast<double>(r) + 1.0;
  }
  PcaResult p = pca_project(x, 2);
  EXPECT_NEAR(p.explained_ratio[0], 1.0, 1e-12);
  EXPECT_NEAR(p.explained_ratio[1], 0.0, 1e-12);
}

TEST(Pca, IsotropicDataSplitsVarianceEvenly) {
  Rng rng(8);
  Tensor x = gaussian_samples(rng, 10000, {0, 0, 0, 0}, {1, 1, 1, 1});
  PcaResult p = pca_project(x, 4);
  double total = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(p.explained_ratio[i], 0.25, 0.05);
    if (i > 0) {
      EXPECT_LE(p.explained_ratio[i], p.explained_ratio[i - 1]);
    }
    total += p.explained_ratio[i];
  }
  EXPECT_LE(total, 1.0 + 1e-12);
}

TEST(Pca, FullRankProjectionPreservesDistances) {
  Rng rng(9);
  Tensor x = gaussian_samples(rng, 40, {1, 2, 3}, {1, 0.5, 2});
  PcaResult p = pca_project(x, 3);
  for (std::size_t a = 0; a < 40; a += 7) {
    for (std::size_t b = a + 1; b < 40; b += 5) {
      double dx = 0, dp = 0;
      for (std::size_t j = 0; j < 3; ++j) {
        dx += (x(a, j) - x(b, j)) * (x(a, j) - x(b, j));
        dp += (p.projected(a, j) - p.projected(b, j)) * (p.projected(a, j) - p.projected(b, j));
      }
      EXPECT_NEAR(dx, dp, 1e-9);
    }
  }
}

TEST(Pca, ComponentsAreOrthonormal) {
  Rng rng(10);
  Tensor x = gaussian_samples(rng, 200, {0, 0, 0}, {3, 2, 1});
  PcaResult p = pca_project(x, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      double dot = 0.0;
      for (std::size_t j = 0; j < 3; ++j) dot += p.components(i, j) * p.components(k, j);
      EXPECT_NEAR(dot, i == k ? 1.0 : 0.0, 1e-12);
    }
  }
}

TEST(Pca, Contracts) {
  EXPECT_THROW(pca_project(Tensor::zeros(5, 2), 3), ContractError);
  EXPECT_THROW(pca_project(Tensor::zeros(1, 2), 1), ContractError);
}

}  // namespace
}  // namespace gfr
