#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "iaa/core.hpp"
#include "iaa/rng.hpp"

namespace iaa {

/// Generator settings for a labeled Gaussian world.
///
/// Classes live in a latent space of `embedding_dim`. Each class k has a
/// unit-norm mean μ_k and diagonal variances
///   v_k = variance_floor + variance_scale * ((1 - c) ν_k² + c μ_k²)
/// with ν_k an independent unit vector and c = corr_knob. At c = 1 the
/// covariance is a deterministic smooth function of the mean; at c = 0 the
/// two are independent. Latent samples are lifted to `input_dim` through a
/// random matrix with orthonormal columns (identity when the dimensions
/// agree) plus isotropic `input_noise`.
struct WorldConfig {
  std::size_t classes = 20;
  std::size_t input_dim = 16;
  std::size_t embedding_dim = 16;
  std::size_t min_samples = 3;
  std::size_t max_samples = 8;
  double corr_knob = 1.0;
  double variance_floor = 0.002;
  double variance_scale = 0.5;
  double input_noise = 0.0;
  /// Extra classes drawn from the same world for held-out evaluation.
  std::size_t holdout_classes = 0;
  std::size_t holdout_min_samples = 20;
  std::size_t holdout_max_samples = 20;
  std::uint64_t seed = 0;

  void validate() const {
    if (classes < 3)
      throw ConfigError("a synthetic world needs at least 3 classes");
    if (embedding_dim < 1 || input_dim < embedding_dim)
      throw ConfigError("synthetic world needs 1 <= embedding_dim <= input_dim");
    if (min_samples < 1 || max_samples < min_samples)
      throw ConfigError("invalid samples-per-class range");
    if (holdout_classes > 0 && (holdout_min_samples < 1 || holdout_max_samples < holdout_min_samples))
      throw ConfigError("invalid held-out samples-per-class range");
    if (!(corr_knob >= 0.0 && corr_knob <= 1.0))
      throw ConfigError("corr_knob must lie in [0, 1]");
    if (variance_floor < 0.0 || variance_scale < 0.0 || input_noise < 0.0)
      throw ConfigError("world variances must be >= 0");
  }
};

/// Ground truth for one class, in latent coordinates.
struct TrueClass {
  Vector mean;
  Vector variance;
};

struct SyntheticWorld {
  Dataset train;
  std::optional<Dataset> holdout;
  std::vector<TrueClass> truth;          // train classes, by dense id - 1
  std::vector<TrueClass> holdout_truth;  // held-out classes
  RowMatrix lift;                        // input_dim × embedding_dim
};

namespace detail {

inline Vector random_unit(std::size_t dim, Rng &rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(dim));
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i)
      v(i) = normal(rng);
  } while (v.norm() == 0.0);
  return v / v.norm();
}

inline TrueClass draw_class(const WorldConfig &cfg, Rng &rng) {
  TrueClass t;
  t.mean = random_unit(cfg.embedding_dim, rng);
  const Vector nu = random_unit(cfg.embedding_dim, rng);
  const Vector shape = (1.0 - cfg.corr_knob) * nu.cwiseProduct(nu) + cfg.corr_knob * t.mean.cwiseProduct(t.mean);
  t.variance = (cfg.variance_floor + cfg.variance_scale * shape.array()).matrix();
  return t;
}

inline Dataset draw_samples(const WorldConfig &cfg, const std::vector<TrueClass> &classes,
                            std::size_t lo, std::size_t hi, const RowMatrix &lift, Rng &rng,
                            const char *name) {
  std::uniform_int_distribution<std::size_t> count(lo, hi);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    counts.push_back(count(rng));
    total += counts.back();
  }
  RowMatrix x(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(cfg.input_dim));
  std::vector<std::int64_t> labels;
  labels.reserve(total);
  Eigen::Index row = 0;
  const bool identity = cfg.input_dim == cfg.embedding_dim;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const Vector sd = classes[k].variance.cwiseSqrt();
    for (std::size_t s = 0; s < counts[k]; ++s, ++row) {
      Vector z(static_cast<Eigen::Index>(cfg.embedding_dim));
      for (Eigen::Index d = 0; d < z.size(); ++d)
        z(d) = classes[k].mean(d) + sd(d) * normal(rng);
      if (identity) {
        x.row(row) = z.transpose();
      } else {
        x.row(row) = (lift * z).transpose();
      }
      if (cfg.input_noise > 0.0)
        for (Eigen::Index d = 0; d < x.cols(); ++d)
          x(row, d) += cfg.input_noise * normal(rng);
      labels.push_back(static_cast<std::int64_t>(k + 1));
    }
  }
  return Dataset::from_raw(std::move(x), labels, name);
}

} // namespace detail

inline SyntheticWorld make_synthetic_world(const WorldConfig &cfg) {
  cfg.validate();
  Rng rng = keyed_rng(cfg.seed, Stream::world);
  SyntheticWorld w;

  if (cfg.input_dim == cfg.embedding_dim) {
    w.lift = RowMatrix::Identity(static_cast<Eigen::Index>(cfg.input_dim),
                                 static_cast<Eigen::Index>(cfg.embedding_dim));
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd g(static_cast<Eigen::Index>(cfg.input_dim), static_cast<Eigen::Index>(cfg.embedding_dim));
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j)
        g(i, j) = normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    w.lift = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
  }

  for (std::size_t k = 0; k < cfg.classes; ++k)
    w.truth.push_back(detail::draw_class(cfg, rng));
  for (std::size_t k = 0; k < cfg.holdout_classes; ++k)
    w.holdout_truth.push_back(detail::draw_class(cfg, rng));

  w.train = detail::draw_samples(cfg, w.truth, cfg.min_samples, cfg.max_samples, w.lift, rng, "train");
  if (cfg.holdout_classes > 0)
    w.holdout = detail::draw_samples(cfg, w.holdout_truth, cfg.holdout_min_samples,
                                     cfg.holdout_max_samples, w.lift, rng, "holdout");
  return w;
}

} // namespace iaa
