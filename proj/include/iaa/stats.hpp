#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "iaa/core.hpp"
#include "iaa/parallel.hpp"

namespace iaa {

enum class CovarianceMode { diagonal, full };

inline const char *to_string(CovarianceMode m) {
  return m == CovarianceMode::diagonal ? "diagonal" : "full";
}

inline CovarianceMode covariance_mode_from(std::string_view s) {
  if (s == "diagonal")
    return CovarianceMode::diagonal;
  if (s == "full")
    return CovarianceMode::full;
  throw ConfigError("unknown covariance mode '" + std::string(s) + "'");
}

/// Class covariance in either storage mode. Diagonal mode keeps a D×1
/// column of variances; full mode keeps the symmetric D×D matrix. Linear
/// combinations and entrywise norms act on `values` identically in both.
struct Covariance {
  CovarianceMode mode = CovarianceMode::diagonal;
  Eigen::MatrixXd values;

  static Covariance zeros(std::size_t dim, CovarianceMode mode) {
    const auto d = static_cast<Eigen::Index>(dim);
    return {mode, mode == CovarianceMode::diagonal ? Eigen::MatrixXd::Zero(d, 1)
                                                   : Eigen::MatrixXd::Zero(d, d)};
  }

  static Covariance identity(std::size_t dim, CovarianceMode mode) {
    const auto d = static_cast<Eigen::Index>(dim);
    return {mode, mode == CovarianceMode::diagonal ? Eigen::MatrixXd(Eigen::MatrixXd::Ones(d, 1))
                                                   : Eigen::MatrixXd(Eigen::MatrixXd::Identity(d, d))};
  }

  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(values.rows()); }

  [[nodiscard]] Vector diagonal() const {
    return mode == CovarianceMode::diagonal ? Vector(values.col(0)) : Vector(values.diagonal());
  }

  [[nodiscard]] Eigen::MatrixXd dense() const {
    if (mode == CovarianceMode::full)
      return values;
    return values.col(0).asDiagonal();
  }

  [[nodiscard]] bool same_shape(const Covariance &o) const {
    return mode == o.mode && values.rows() == o.values.rows() && values.cols() == o.values.cols();
  }
};

inline void require_same_shape(const Covariance &a, const Covariance &b) {
  if (!a.same_shape(b))
    throw DataError("covariance shape mismatch");
}

struct ClassStats {
  ClassId class_id = 0;
  std::size_t count = 0;
  Vector mean;
  Covariance cov;
};

struct GlobalStats {
  Covariance cov;
  std::size_t total_count = 0;
};

/// Per-class mean and biased (divisor n_k) covariance, two passes over each
/// class. A singleton class gets a zero covariance.
inline std::vector<ClassStats> estimate_class_stats(const Dataset &data, const ClassIndex &index,
                                                    CovarianceMode mode) {
  const std::size_t dim = data.dim();
  std::vector<ClassStats> out(index.num_classes());
  parallel_for(index.num_classes(), [&](std::size_t k) {
    const auto &members = index.members[k];
    if (members.empty())
      throw DataError("class " + std::to_string(k + 1) + " has no samples");
    ClassStats s;
    s.class_id = static_cast<ClassId>(k + 1);
    s.count = members.size();
    s.mean = Vector::Zero(static_cast<Eigen::Index>(dim));
    for (auto i : members)
      s.mean += data.row(i).transpose();
    s.mean /= static_cast<double>(s.count);
    s.cov = Covariance::zeros(dim, mode);
    for (auto i : members) {
      const Vector c = data.row(i).transpose() - s.mean;
      if (mode == CovarianceMode::diagonal)
        s.cov.values.col(0) += c.cwiseProduct(c);
      else
        s.cov.values.noalias() += c * c.transpose();
    }
    s.cov.values /= static_cast<double>(s.count);
    out[k] = std::move(s);
  });
  return out;
}

inline std::vector<ClassStats> estimate_class_stats(const Dataset &data, CovarianceMode mode) {
  return estimate_class_stats(data, build_class_index(data.labels()), mode);
}

/// Single-pass (Welford) moment accumulator for one class.
class MomentAccumulator {
public:
  MomentAccumulator(std::size_t dim, CovarianceMode mode)
      : mean_(Vector::Zero(static_cast<Eigen::Index>(dim))), m2_(Covariance::zeros(dim, mode)) {}

  void add(const Eigen::Ref<const Vector> &x) {
    ++count_;
    const Vector delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    const Vector delta2 = x - mean_;
    if (m2_.mode == CovarianceMode::diagonal)
      m2_.values.col(0) += delta.cwiseProduct(delta2);
    else
      m2_.values.noalias() += delta * delta2.transpose();
  }

  [[nodiscard]] std::size_t count() const { return count_; }
  [[nodiscard]] const Vector &mean() const { return mean_; }

  [[nodiscard]] Covariance covariance() const {
    Covariance c = m2_;
    if (count_ > 0)
      c.values /= static_cast<double>(count_);
    if (c.mode == CovarianceMode::full)
      c.values = 0.5 * (c.values + c.values.transpose()).eval();
    return c;
  }

private:
  std::size_t count_ = 0;
  Vector mean_;
  Covariance m2_;
};

inline std::vector<ClassStats> estimate_class_stats_streaming(const Dataset &data,
                                                              CovarianceMode mode) {
  std::vector<MomentAccumulator> acc(data.num_classes(), MomentAccumulator(data.dim(), mode));
  for (std::size_t i = 0; i < data.size(); ++i)
    acc[static_cast<std::size_t>(data.labels()[i] - 1)].add(data.row(i).transpose());
  std::vector<ClassStats> out;
  out.reserve(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k)
    out.push_back({static_cast<ClassId>(k + 1), acc[k].count(), acc[k].mean(), acc[k].covariance()});
  return out;
}

/// Count-weighted average of all class covariances.
inline GlobalStats estimate_global_covariance(const std::vector<ClassStats> &stats) {
  if (stats.empty())
    throw DataError("global covariance needs at least one class");
  GlobalStats g{Covariance::zeros(stats.front().cov.dim(), stats.front().cov.mode), 0};
  for (const auto &s : stats) {
    require_same_shape(g.cov, s.cov);
    g.cov.values += static_cast<double>(s.count) * s.cov.values;
    g.total_count += s.count;
  }
  g.cov.values /= static_cast<double>(g.total_count);
  return g;
}

/// Covariance replacements used for ablations.
enum class Degeneration { keep, identity, global, diagonal };

inline Degeneration degeneration_from(std::string_view s) {
  if (s == "keep")
    return Degeneration::keep;
  if (s == "identity")
    return Degeneration::identity;
  if (s == "global")
    return Degeneration::global;
  if (s == "diagonal")
    return Degeneration::diagonal;
  throw ConfigError("unknown degeneration '" + std::string(s) + "'");
}

inline std::vector<ClassStats> degenerate_covariance(std::vector<ClassStats> stats,
                                                     const GlobalStats &global, Degeneration how) {
  for (auto &s : stats) {
    switch (how) {
    case Degeneration::keep:
      break;
    case Degeneration::identity:
      s.cov = Covariance::identity(s.cov.dim(), s.cov.mode);
      break;
    case Degeneration::global:
      s.cov = global.cov;
      break;
    case Degeneration::diagonal:
      if (s.cov.mode == CovarianceMode::full) {
        const Eigen::MatrixXd d = s.cov.values.diagonal().asDiagonal();
        s.cov.values = d;
      }
      break;
    }
  }
  return stats;
}

} // namespace iaa
