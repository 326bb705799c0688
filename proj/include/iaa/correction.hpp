#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "iaa/correlation.hpp"
#include "iaa/parallel.hpp"
#include "iaa/stats.hpp"

namespace iaa {

/// Parameters of the few-sample covariance correction.
///
/// `sigma_m` / `sigma_cv` may be +infinity, which disables the corresponding
/// kernel factor. `tau` is the largest class size that still receives any
/// correction; `gamma` blends the neighbor pool with the global covariance.
struct CorrectionConfig {
  std::size_t neighbors = 25;
  double sigma_m = 1.0;
  double sigma_cv = 1.0;
  double beta = 0.1;
  std::size_t tau = 40;
  double gamma = 0.1;
  bool include_self = false;
  DistanceMetricConfig metric{};

  void validate() const {
    if (neighbors < 1)
      throw ConfigError("neighbor count K must be >= 1");
    if (!(sigma_m > 0.0) || !(sigma_cv > 0.0))
      throw ConfigError("kernel bandwidths must be > 0");
    if (!(beta > 0.0) || !std::isfinite(beta))
      throw ConfigError("beta must be a positive finite number");
    if (tau < 1)
      throw ConfigError("tau must be >= 1");
    if (!(gamma >= 0.0 && gamma <= 1.0))
      throw ConfigError("gamma must lie in [0, 1]");
    metric.validate();
  }
};

namespace detail {

inline const ClassStats &stats_of(const std::vector<ClassStats> &stats, ClassId k) {
  if (k < 1 || static_cast<std::size_t>(k) > stats.size())
    throw DataError("class id " + std::to_string(k) + " out of range");
  const auto &s = stats[static_cast<std::size_t>(k - 1)];
  if (s.class_id != k)
    throw DataError("stats must be ordered by dense class id");
  return s;
}

/// log of the kernel factor; 0 when the bandwidth is infinite.
inline double log_kernel(double distance, double sigma) {
  if (std::isinf(sigma))
    return 0.0;
  return -(distance * distance) / (2.0 * sigma * sigma);
}

} // namespace detail

/// The K classes with the smallest mean distance to class k, ties broken by
/// ascending id. Class k itself is left out unless `include_self` is set.
inline std::vector<ClassId> neighbor_set(const std::vector<ClassStats> &stats, ClassId k,
                                         std::size_t K, bool include_self = false,
                                         const DistanceMetricConfig &metric = {}) {
  if (stats.size() < 2 && !include_self)
    throw DataError("neighbor set needs at least two classes");
  const auto &anchor = detail::stats_of(stats, k);
  std::vector<std::pair<double, ClassId>> cand;
  cand.reserve(stats.size());
  for (const auto &s : stats) {
    if (s.class_id == k && !include_self)
      continue;
    cand.emplace_back(mean_distance(s.mean, anchor.mean, metric), s.class_id);
  }
  const std::size_t take = std::min(K, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
  std::vector<ClassId> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i)
    out.push_back(cand[i].second);
  return out;
}

/// Exponent of the Gaussian kernel between a neighbor and the anchor.
inline double kernel_exponent(const ClassStats &neighbor, const ClassStats &anchor,
                              const CorrectionConfig &cfg) {
  return detail::log_kernel(mean_distance(neighbor.mean, anchor.mean, cfg.metric), cfg.sigma_m) +
         detail::log_kernel(cov_distance(neighbor.cov, anchor.cov, cfg.metric), cfg.sigma_cv);
}

/// w_i = n_i * exp(-D_m^2 / 2σ_m^2 - D_cv^2 / 2σ_cv^2).
inline double neighbor_weight(ClassId i, ClassId k, const std::vector<ClassStats> &stats,
                              const CorrectionConfig &cfg) {
  const auto &ni = detail::stats_of(stats, i);
  return static_cast<double>(ni.count) * std::exp(kernel_exponent(ni, detail::stats_of(stats, k), cfg));
}

struct NeighborPool {
  Covariance cov;
  std::vector<ClassId> neighbors;
  std::vector<double> weights;
};

/// Weighted pool of neighbor covariances. Kernel exponents are shifted by
/// their maximum before exponentiation, so kernels that underflow
/// individually still yield a convex combination.
inline NeighborPool neighbor_covariance(const std::vector<ClassStats> &stats, ClassId k,
                                        const CorrectionConfig &cfg) {
  const auto &anchor = detail::stats_of(stats, k);
  NeighborPool pool;
  pool.neighbors = neighbor_set(stats, k, cfg.neighbors, cfg.include_self, cfg.metric);
  if (pool.neighbors.empty())
    throw DataError("empty neighbor set for class " + std::to_string(k));

  std::vector<double> expo;
  expo.reserve(pool.neighbors.size());
  for (auto i : pool.neighbors)
    expo.push_back(kernel_exponent(detail::stats_of(stats, i), anchor, cfg));
  const double shift = *std::max_element(expo.begin(), expo.end());
  if (!std::isfinite(shift))
    throw NumericalError("all neighbor weights vanish for class " + std::to_string(k));

  pool.cov = Covariance::zeros(anchor.cov.dim(), anchor.cov.mode);
  double total = 0.0;
  for (std::size_t t = 0; t < pool.neighbors.size(); ++t) {
    const auto &s = detail::stats_of(stats, pool.neighbors[t]);
    const double n = static_cast<double>(s.count);
    const double rel = n * std::exp(expo[t] - shift);
    require_same_shape(pool.cov, s.cov);
    pool.cov.values += rel * s.cov.values;
    total += rel;
    pool.weights.push_back(n * std::exp(expo[t]));
  }
  pool.cov.values /= total;
  return pool;
}

/// Correction strength for a class with n samples: 1 / (1 + ln(1 + β(n-1)))
/// up to the threshold τ, zero above it.
inline double alpha(std::size_t n, double beta, std::size_t tau) {
  if (n < 1)
    throw DataError("alpha: class size must be >= 1");
  if (n > tau)
    return 0.0;
  return 1.0 / (1.0 + std::log(1.0 + beta * static_cast<double>(n - 1)));
}

struct ClassCorrection {
  double alpha = 0.0;
  std::vector<ClassId> neighbors;
  std::vector<double> weights;
};

struct CorrectedStats {
  std::vector<ClassStats> classes;
  std::vector<ClassCorrection> corrections;
  GlobalStats global;
};

/// Σ_cr = (1-α) Σ_k + α [ (1-γ) Σ_neighbor + γ Σ_global ], per class.
inline CorrectedStats correct_covariance(const std::vector<ClassStats> &stats,
                                         const GlobalStats &global, const CorrectionConfig &cfg) {
  cfg.validate();
  CorrectedStats out;
  out.global = global;
  out.classes = stats;
  out.corrections.resize(stats.size());
  const bool have_neighbors = stats.size() >= 2 || cfg.include_self;

  parallel_for(stats.size(), [&](std::size_t idx) {
    const auto &s = stats[idx];
    require_same_shape(s.cov, global.cov);
    ClassCorrection &corr = out.corrections[idx];
    corr.alpha = alpha(s.count, cfg.beta, cfg.tau);

    Covariance pooled = global.cov;
    if (have_neighbors) {
      auto pool = neighbor_covariance(stats, s.class_id, cfg);
      corr.neighbors = std::move(pool.neighbors);
      corr.weights = std::move(pool.weights);
      pooled = std::move(pool.cov);
    }
    if (corr.alpha == 0.0)
      return;
    const double a = corr.alpha, g = cfg.gamma;
    out.classes[idx].cov.values =
        (1.0 - a) * s.cov.values + a * ((1.0 - g) * pooled.values + g * global.cov.values);
  });
  return out;
}

} // namespace iaa
