#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "iaa/parallel.hpp"
#include "iaa/stats.hpp"

namespace iaa {

/// How class means and covariances are compared. The default is the metric
/// used for neighbor selection: squared-mean difference, raw covariance
/// difference, 2-norm.
struct DistanceMetricConfig {
  int p = 2;
  bool square_mean = true;
  bool sqrt_cov = false;

  void validate() const {
    if (p < 1 || p > 4)
      throw ConfigError("norm order p must be in {1,2,3,4}, got " + std::to_string(p));
  }
};

/// Entrywise (vectorized) p-norm.
template <typename Derived> double entrywise_norm(const Eigen::MatrixBase<Derived> &m, int p) {
  switch (p) {
  case 1:
    return m.template lpNorm<1>();
  case 2:
    return m.norm();
  default: {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        acc += std::pow(std::abs(m(i, j)), p);
    return std::pow(acc, 1.0 / p);
  }
  }
}

inline double mean_distance(const Eigen::Ref<const Vector> &mu_i, const Eigen::Ref<const Vector> &mu_j,
                            const DistanceMetricConfig &cfg = {}) {
  require_same_dim(mu_i, mu_j);
  if (cfg.square_mean)
    return entrywise_norm(mu_i.cwiseProduct(mu_i) - mu_j.cwiseProduct(mu_j), cfg.p);
  return entrywise_norm(mu_i - mu_j, cfg.p);
}

/// Principal square root: elementwise for diagonal storage, eigen-based for full.
inline Eigen::MatrixXd covariance_sqrt(const Covariance &c) {
  const double tol = 1e-12 * std::max(1.0, c.values.cwiseAbs().maxCoeff());
  if (c.mode == CovarianceMode::diagonal) {
    if ((c.values.array() < 0.0).any())
      throw DataError("negative variance under sqrt_cov");
    return c.values.cwiseSqrt();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.values);
  Vector ev = es.eigenvalues();
  if (ev.minCoeff() < -tol * 1e3)
    throw DataError("covariance is not positive semidefinite under sqrt_cov");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline double cov_distance(const Covariance &a, const Covariance &b,
                           const DistanceMetricConfig &cfg = {}) {
  require_same_shape(a, b);
  if (cfg.sqrt_cov)
    return entrywise_norm(covariance_sqrt(a) - covariance_sqrt(b), cfg.p);
  return entrywise_norm(a.values - b.values, cfg.p);
}

/// Average ranks (1-based), ties share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]])
      ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t)
      ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation (Pearson on average ranks).
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw DataError("spearman: length mismatch");
  if (x.size() < 2)
    throw DataError("spearman: need at least two observations");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw NumericalError("spearman: constant sequence, correlation undefined");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct CorrelationReport {
  std::vector<double> per_class_rho;
  double mean_rho = 0.0;
  /// Averaged over anchors; position r is the r-th farthest class by mean distance.
  std::vector<double> mean_curve;
  std::vector<double> cov_curve;
  DistanceMetricConfig config;
};

namespace detail {

inline void minmax_normalize(std::vector<double> &v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, range = *hi - *lo;
  for (auto &x : v)
    x = range > 0.0 ? (x - a) / range : 0.0;
}

} // namespace detail

inline CorrelationReport correlation_report(const std::vector<ClassStats> &stats,
                                            const DistanceMetricConfig &cfg = {}) {
  cfg.validate();
  const std::size_t C = stats.size();
  if (C < 3)
    throw DataError("correlation report needs at least 3 classes");

  CorrelationReport rep;
  rep.config = cfg;
  rep.per_class_rho.resize(C);
  std::vector<std::vector<double>> mcurves(C), ccurves(C);

  parallel_for(C, [&](std::size_t k) {
    std::vector<double> md, cd;
    md.reserve(C - 1);
    cd.reserve(C - 1);
    for (std::size_t j = 0; j < C; ++j) {
      if (j == k)
        continue;
      md.push_back(mean_distance(stats[k].mean, stats[j].mean, cfg));
      cd.push_back(cov_distance(stats[k].cov, stats[j].cov, cfg));
    }
    rep.per_class_rho[k] = spearman(md, cd);

    std::vector<std::size_t> order(md.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return md[a] > md[b]; });
    std::vector<double> ms(order.size()), cs(order.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      ms[r] = md[order[r]];
      cs[r] = cd[order[r]];
    }
    detail::minmax_normalize(ms);
    detail::minmax_normalize(cs);
    mcurves[k] = std::move(ms);
    ccurves[k] = std::move(cs);
  });

  rep.mean_rho = std::accumulate(rep.per_class_rho.begin(), rep.per_class_rho.end(), 0.0) /
                 static_cast<double>(C);
  rep.mean_curve.assign(C - 1, 0.0);
  rep.cov_curve.assign(C - 1, 0.0);
  for (std::size_t k = 0; k < C; ++k)
    for (std::size_t r = 0; r + 1 < C; ++r) {
      rep.mean_curve[r] += mcurves[k][r];
      rep.cov_curve[r] += ccurves[k][r];
    }
  for (std::size_t r = 0; r + 1 < C; ++r) {
    rep.mean_curve[r] /= static_cast<double>(C);
    rep.cov_curve[r] /= static_cast<double>(C);
  }
  return rep;
}

struct GlobalDistanceProfile {
  std::vector<double> distances;
  /// Distance from the global covariance to the zero matrix.
  double origin_distance = 0.0;
};

inline GlobalDistanceProfile global_distance_profile(const std::vector<ClassStats> &stats,
                                                     const GlobalStats &global,
                                                     const DistanceMetricConfig &cfg = {}) {
  cfg.validate();
  if (stats.empty())
    throw DataError("global distance profile needs at least one class");
  GlobalDistanceProfile out;
  out.distances.reserve(stats.size());
  for (const auto &s : stats)
    out.distances.push_back(cov_distance(global.cov, s.cov, cfg));
  out.origin_distance =
      cov_distance(global.cov, Covariance::zeros(global.cov.dim(), global.cov.mode), cfg);
  return out;
}

} // namespace iaa
