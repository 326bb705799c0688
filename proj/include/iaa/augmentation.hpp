#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "iaa/core.hpp"
#include "iaa/parallel.hpp"
#include "iaa/rng.hpp"
#include "iaa/stats.hpp"

namespace iaa {

enum class AugmentStrategy { dynamic, fixed };

inline const char *to_string(AugmentStrategy s) {
  return s == AugmentStrategy::dynamic ? "dynamic" : "fixed";
}

inline AugmentStrategy augment_strategy_from(std::string_view s) {
  if (s == "dynamic")
    return AugmentStrategy::dynamic;
  if (s == "fixed")
    return AugmentStrategy::fixed;
  throw ConfigError("unknown augmentation strategy '" + std::string(s) + "'");
}

/// `per_sample == 0` turns augmentation off entirely.
struct AugmentConfig {
  double lambda = 0.7;
  std::size_t per_sample = 3;
  AugmentStrategy strategy = AugmentStrategy::dynamic;
  std::uint64_t seed = 0;
  bool renormalize = true;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw ConfigError("lambda must be a finite number >= 0");
  }
};

/// Generated samples. Row r descends from origin[r] (or from the class mean
/// when origin[r] < 0) and carries offsets.row(r), the raw noise added
/// before any renormalization.
struct SyntheticBatch {
  RowMatrix samples;
  RowMatrix offsets;
  std::vector<std::int64_t> origin;
  std::vector<ClassId> labels;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
};

/// Draws δ ~ N(0, λΣ) for one class covariance.
class GaussianOffsetSampler {
public:
  GaussianOffsetSampler(const Covariance &cov, double lambda) : mode_(cov.mode) {
    if (mode_ == CovarianceMode::diagonal) {
      if ((cov.values.array() < 0.0).any())
        throw DataError("negative variance in class covariance");
      scale_ = (lambda * cov.values.col(0)).cwiseSqrt();
      return;
    }
    const Eigen::MatrixXd scaled = lambda * cov.values;
    const auto d = scaled.rows();
    const double trace = scaled.trace();
    if (trace == 0.0 && scaled.isZero(0.0)) {
      factor_ = Eigen::MatrixXd::Zero(d, d);
      return;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(scaled);
    if (llt.info() != Eigen::Success) {
      const double ridge = 1e-8 * trace / static_cast<double>(d);
      llt.compute(scaled + ridge * Eigen::MatrixXd::Identity(d, d));
      if (llt.info() != Eigen::Success)
        throw NumericalError("Cholesky factorization failed after ridge regularization");
    }
    factor_ = llt.matrixL();
  }

  [[nodiscard]] std::size_t dim() const {
    return static_cast<std::size_t>(mode_ == CovarianceMode::diagonal ? scale_.size()
                                                                      : factor_.rows());
  }

  Vector draw(Rng &rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector eps(static_cast<Eigen::Index>(dim()));
    for (Eigen::Index d = 0; d < eps.size(); ++d)
      eps(d) = normal(rng);
    if (mode_ == CovarianceMode::diagonal)
      return scale_.cwiseProduct(eps);
    return factor_ * eps;
  }

private:
  CovarianceMode mode_;
  Vector scale_;
  Eigen::MatrixXd factor_;
};

/// Identifies one generation call inside a training run; together with the
/// seed it keys every per-sample random stream.
struct GenerationKey {
  std::uint64_t epoch = 0;
  std::uint64_t batch = 0;
};

namespace detail {

/// One sampler per class that actually occurs in `labels`.
inline std::vector<std::optional<GaussianOffsetSampler>>
make_samplers(const std::vector<ClassStats> &stats, const std::vector<ClassId> &labels,
              double lambda) {
  std::vector<std::optional<GaussianOffsetSampler>> samplers(stats.size());
  for (auto c : labels) {
    if (c < 1 || static_cast<std::size_t>(c) > stats.size())
      throw DataError("no class statistics for class " + std::to_string(c));
    auto &slot = samplers[static_cast<std::size_t>(c - 1)];
    if (!slot)
      slot.emplace(stats[static_cast<std::size_t>(c - 1)].cov, lambda);
  }
  return samplers;
}

inline SyntheticBatch generate_around(const RowMatrix &centers, const std::vector<ClassId> &labels,
                                      const std::vector<std::int64_t> &origin_ids,
                                      const std::vector<ClassStats> &stats,
                                      const AugmentConfig &cfg, GenerationKey key, Stream stream) {
  cfg.validate();
  const std::size_t n = labels.size();
  const std::size_t M = cfg.per_sample;
  const auto dim = centers.cols();
  const auto samplers = make_samplers(stats, labels, cfg.lambda);

  SyntheticBatch out;
  out.samples.resize(static_cast<Eigen::Index>(n * M), dim);
  out.offsets.resize(static_cast<Eigen::Index>(n * M), dim);
  out.origin.resize(n * M);
  out.labels.resize(n * M);
  parallel_for(n, [&](std::size_t i) {
    const auto &sampler = *samplers[static_cast<std::size_t>(labels[i] - 1)];
    if (static_cast<Eigen::Index>(sampler.dim()) != dim)
      throw DataError("class statistics dimension does not match embeddings");
    Rng rng = keyed_rng(cfg.seed, stream, {key.epoch, key.batch, i});
    for (std::size_t m = 0; m < M; ++m) {
      const auto r = static_cast<Eigen::Index>(i * M + m);
      const Vector delta = sampler.draw(rng);
      out.offsets.row(r) = delta.transpose();
      out.samples.row(r) = centers.row(static_cast<Eigen::Index>(i)) + delta.transpose();
      if (cfg.renormalize) {
        const double norm = out.samples.row(r).norm();
        if (norm == 0.0)
          throw NumericalError("synthetic sample collapsed to the origin");
        out.samples.row(r) /= norm;
      }
      out.origin[i * M + m] = origin_ids[i];
      out.labels[i * M + m] = labels[i];
    }
  });
  return out;
}

} // namespace detail

/// Dynamic strategy: M samples per embedding, ẑ = z + δ with δ ~ N(0, λΣ_y).
/// Row r of the result belongs to origin r / M.
inline SyntheticBatch generate_dynamic(const RowMatrix &embeddings, const std::vector<ClassId> &labels,
                                       const std::vector<ClassStats> &stats,
                                       const AugmentConfig &cfg, GenerationKey key = {}) {
  if (embeddings.rows() != static_cast<Eigen::Index>(labels.size()))
    throw DataError("embedding rows do not match label count");
  std::vector<std::int64_t> origin(labels.size());
  std::iota(origin.begin(), origin.end(), 0);
  return detail::generate_around(embeddings, labels, origin, stats, cfg, key, Stream::augment);
}

/// Fixed strategy: samples drawn around the class mean, N(μ_y, λΣ_y). One
/// group of M per requested label; origins are recorded as -1.
inline SyntheticBatch generate_fixed(const std::vector<ClassId> &labels,
                                     const std::vector<ClassStats> &stats,
                                     const AugmentConfig &cfg, GenerationKey key = {}) {
  if (stats.empty())
    throw DataError("fixed generation needs class statistics");
  RowMatrix centers(static_cast<Eigen::Index>(labels.size()),
                    static_cast<Eigen::Index>(stats.front().mean.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = labels[i];
    if (c < 1 || static_cast<std::size_t>(c) > stats.size())
      throw DataError("no class statistics for class " + std::to_string(c));
    centers.row(static_cast<Eigen::Index>(i)) = stats[static_cast<std::size_t>(c - 1)].mean.transpose();
  }
  std::vector<std::int64_t> origin(labels.size(), -1);
  return detail::generate_around(centers, labels, origin, stats, cfg, key, Stream::fixed_augment);
}

} // namespace iaa
