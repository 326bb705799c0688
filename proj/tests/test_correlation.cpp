#include <gtest/gtest.h>

#include <random>

#include "iaa/iaa.hpp"
#include "oracles.hpp"

using namespace iaa;

namespace {

std::vector<ClassStats> random_stats(std::mt19937_64 &rng, std::size_t C, std::size_t D, CovarianceMode mode) {
  std::vector<ClassStats> out;
  for (std::size_t k = 0; k < C; ++k) {
    ClassStats s;
    s.class_id = static_cast<ClassId>(k + 1);
    s.count = 5;
    s.mean = oracle::gaussian(1, D, rng).row(0).transpose();
    const auto a = oracle::gaussian(D, D, rng);
    const Eigen::MatrixXd full = a * a.transpose() / static_cast<double>(D);
    s.cov = mode == CovarianceMode::full ? Covariance{mode, full}
                                         : Covariance{mode, Eigen::MatrixXd(full.diagonal())};
    out.push_back(s);
  }
  return out;
}

} // namespace

TEST(Spearman, MatchesCountingOracle) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> small(0, 5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x, y;
    for (int i = 0; i < 30; ++i) {
      x.push_back(small(rng));  // many ties
      y.push_back(std::normal_distribution<double>()(rng));
    }
    EXPECT_NEAR(spearman(x, y), oracle::spearman(x, y), 1e-12);
  }
}

TEST(Spearman, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(2);
  std::vector<double> x, y, ex;
  for (int i = 0; i < 40; ++i) {
    x.push_back(std::normal_distribution<double>()(rng));
    y.push_back(x.back() + std::normal_distribution<double>(0, 0.5)(rng));
    ex.push_back(std::exp(3 * x.back()));
  }
  EXPECT_DOUBLE_EQ(spearman(x, y), spearman(ex, y));
  EXPECT_DOUBLE_EQ(spearman(x, x), 1.0);
}

TEST(Spearman, Errors) {
  std::vector<double> a{1, 2, 3}, b{1, 2}, c{4, 4, 4};
  EXPECT_THROW(spearman(a, b), DataError);
  EXPECT_THROW(spearman(std::vector<double>{1}, std::vector<double>{2}), DataError);
  EXPECT_THROW(spearman(a, c), NumericalError);
}

TEST(Distances, MeanAndCovarianceVariants) {
  Vector a(2), b(2);
  a << 1, -2;
  b << 0.5, 1;
  DistanceMetricConfig sq;
  EXPECT_DOUBLE_EQ(mean_distance(a, b, sq), std::hypot(0.75, 3.0));
  DistanceMetricConfig plain{1, false, false};
  EXPECT_DOUBLE_EQ(mean_distance(a, b, plain), 0.5 + 3.0);
  Covariance x{CovarianceMode::diagonal, Eigen::MatrixXd(Eigen::Vector2d(4, 9))};
  Covariance y{CovarianceMode::diagonal, Eigen::MatrixXd(Eigen::Vector2d(1, 1))};
  EXPECT_DOUBLE_EQ(cov_distance(x, y), std::hypot(3.0, 8.0));
  DistanceMetricConfig root{2, true, true};
  EXPECT_DOUBLE_EQ(cov_distance(x, y, root), std::hypot(1.0, 2.0));
  DistanceMetricConfig bad{5, true, false};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Distances, FullSqrtMatchesDiagonalOnDiagonalInput) {
  Eigen::MatrixXd m = Eigen::Vector3d(4, 9, 16).asDiagonal();
  const auto r = covariance_sqrt(Covariance{CovarianceMode::full, m});
  EXPECT_TRUE(r.isApprox(Eigen::MatrixXd(Eigen::Vector3d(2, 3, 4).asDiagonal()), 1e-12));
}

TEST(CorrelationReport, PerClassRhoMatchesBruteForce) {
  std::mt19937_64 rng(5);
  for (auto mode : {CovarianceMode::diagonal, CovarianceMode::full}) {
    const auto stats = random_stats(rng, 12, 4, mode);
    const auto rep = correlation_report(stats);
    ASSERT_EQ(rep.per_class_rho.size(), 12u);
    double mean = 0.0;
    for (std::size_t k = 0; k < 12; ++k) {
      std::vector<double> md, cd;
      for (std::size_t j = 0; j < 12; ++j) {
        if (j == k)
          continue;
        double m = 0, c = 0;
        for (Eigen::Index d = 0; d < 4; ++d)
          m += std::pow(stats[k].mean(d) * stats[k].mean(d) - stats[j].mean(d) * stats[j].mean(d), 2);
        c = (stats[k].cov.values - stats[j].cov.values).squaredNorm();
        md.push_back(std::sqrt(m));
        cd.push_back(std::sqrt(c));
      }
      EXPECT_NEAR(rep.per_class_rho[k], oracle::spearman(md, cd), 1e-12);
      mean += rep.per_class_rho[k] / 12.0;
    }
    EXPECT_NEAR(rep.mean_rho, mean, 1e-12);
    for (double r : rep.per_class_rho) {
      EXPECT_GE(r, -1.0);
      EXPECT_LE(r, 1.0);
    }
  }
}

TEST(CorrelationReport, CurvesStartAtOneAndDecrease) {
  std::mt19937_64 rng(6);
  const auto rep = correlation_report(random_stats(rng, 10, 3, CovarianceMode::diagonal));
  ASSERT_EQ(rep.mean_curve.size(), 9u);
  EXPECT_DOUBLE_EQ(rep.mean_curve.front(), 1.0);
  EXPECT_DOUBLE_EQ(rep.mean_curve.back(), 0.0);
  for (std::size_t r = 1; r < rep.mean_curve.size(); ++r)
    EXPECT_LE(rep.mean_curve[r], rep.mean_curve[r - 1]);
  for (double v : rep.cov_curve) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(CorrelationReport, NeedsThreeClasses) {
  std::mt19937_64 rng(7);
  EXPECT_THROW(correlation_report(random_stats(rng, 2, 3, CovarianceMode::diagonal)), DataError);
}

TEST(GlobalProfile, DistancesToEachClass) {
  std::mt19937_64 rng(8);
  const auto stats = random_stats(rng, 5, 3, CovarianceMode::diagonal);
  const auto g = estimate_global_covariance(stats);
  const auto p = global_distance_profile(stats, g);
  ASSERT_EQ(p.distances.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k)
    EXPECT_DOUBLE_EQ(p.distances[k], (g.cov.values - stats[k].cov.values).norm());
  EXPECT_DOUBLE_EQ(p.origin_distance, g.cov.values.norm());
}
