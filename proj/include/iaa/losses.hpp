#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "iaa/augmentation.hpp"
#include "iaa/core.hpp"

namespace iaa {

enum class LossKind { contrastive, triplet, ms };

inline const char *to_string(LossKind k) {
  switch (k) {
  case LossKind::contrastive:
    return "contrastive";
  case LossKind::triplet:
    return "triplet";
  case LossKind::ms:
    return "ms";
  }
  return "unknown";
}

inline LossKind loss_kind_from(std::string_view s) {
  if (s == "contrastive")
    return LossKind::contrastive;
  if (s == "triplet")
    return LossKind::triplet;
  if (s == "ms")
    return LossKind::ms;
  throw ConfigError("unknown loss '" + std::string(s) + "'");
}

struct LossConfig {
  LossKind kind = LossKind::triplet;
  // contrastive: positives pulled inside pos_margin, negatives pushed past neg_margin
  double pos_margin = 0.2;
  double neg_margin = 1.0;
  double triplet_margin = 0.2;
  // multi-similarity
  double ms_alpha = 2.0;
  double ms_beta = 50.0;
  double ms_lambda = 0.5;
  double ms_epsilon = 0.1;

  void validate() const {
    if (pos_margin < 0.0 || neg_margin < 0.0 || triplet_margin < 0.0)
      throw ConfigError("loss margins must be >= 0");
    if (!(ms_alpha > 0.0) || !(ms_beta > 0.0))
      throw ConfigError("ms_alpha and ms_beta must be > 0");
    if (ms_epsilon < 0.0)
      throw ConfigError("ms_epsilon must be >= 0");
  }
};

/// A mini-batch as seen by the losses.
///
/// `embeddings` are raw (pre-normalization) rows; each loss L2-normalizes
/// them and returns gradients with respect to the raw rows. Synthetic row r
/// is attached when synthetic_origin[r] >= 0: its position is
/// unit(x_origin) + offset, renormalized when `renormalize_synthetic`, and
/// its gradient folds back onto the origin. Detached rows (origin < 0) sit at
/// synthetic_points.row(r) and carry no gradient.
struct Batch {
  RowMatrix embeddings;
  std::vector<ClassId> labels;
  RowMatrix synthetic_offsets;
  RowMatrix synthetic_points;
  std::vector<std::int64_t> synthetic_origin;
  std::vector<ClassId> synthetic_labels;
  bool renormalize_synthetic = true;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] std::size_t synthetic_size() const { return synthetic_labels.size(); }

  /// Attaches generated samples. Fixed-strategy samples come in detached.
  void attach(const SyntheticBatch &syn, bool renormalize) {
    synthetic_offsets = syn.offsets;
    synthetic_points = syn.samples;
    synthetic_origin = syn.origin;
    synthetic_labels = syn.labels;
    renormalize_synthetic = renormalize;
  }

  void clear_synthetic() {
    synthetic_offsets.resize(0, embeddings.cols());
    synthetic_points.resize(0, embeddings.cols());
    synthetic_origin.clear();
    synthetic_labels.clear();
  }
};

struct LossOutput {
  double value = 0.0;
  /// d value / d embeddings, one row per original sample.
  RowMatrix gradients;
  /// Active hinge terms, active triplets, or mined MS pairs.
  std::size_t active_terms = 0;
  /// Active terms that involve a synthetic sample.
  std::size_t synthetic_active_terms = 0;
  /// Anchors without any positive or negative candidate.
  std::size_t skipped_anchors = 0;
};

namespace detail {

/// Normalized originals followed by synthetic positions, plus what is
/// needed to push point gradients back onto the raw embeddings.
struct CandidateSet {
  std::size_t n = 0;
  RowMatrix points;  // (n + m) × D
  std::vector<ClassId> labels;
  std::vector<double> raw_norms;  // norms of raw embeddings / synthetic pre-renorm rows
  const Batch *batch = nullptr;

  [[nodiscard]] bool is_synthetic(std::size_t q) const { return q >= n; }

  static CandidateSet build(const Batch &b) {
    const std::size_t n = b.size();
    const std::size_t m = b.synthetic_size();
    if (static_cast<std::size_t>(b.embeddings.rows()) != n)
      throw DataError("batch embeddings do not match label count");
    if (b.synthetic_origin.size() != m || static_cast<std::size_t>(b.synthetic_offsets.rows()) != m)
      throw DataError("synthetic rows are inconsistent");
    CandidateSet c;
    c.n = n;
    c.batch = &b;
    const auto D = b.embeddings.cols();
    c.points.resize(static_cast<Eigen::Index>(n + m), D);
    c.labels = b.labels;
    c.labels.insert(c.labels.end(), b.synthetic_labels.begin(), b.synthetic_labels.end());
    c.raw_norms.resize(n + m, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double norm = b.embeddings.row(static_cast<Eigen::Index>(i)).norm();
      if (norm == 0.0)
        throw NumericalError("zero-norm embedding in batch");
      c.raw_norms[i] = norm;
      c.points.row(static_cast<Eigen::Index>(i)) = b.embeddings.row(static_cast<Eigen::Index>(i)) / norm;
    }
    for (std::size_t r = 0; r < m; ++r) {
      const auto q = static_cast<Eigen::Index>(n + r);
      const auto o = b.synthetic_origin[r];
      if (o < 0) {
        c.points.row(q) = b.synthetic_points.row(static_cast<Eigen::Index>(r));
        continue;
      }
      if (static_cast<std::size_t>(o) >= n)
        throw DataError("synthetic origin out of range");
      if (b.synthetic_labels[r] != b.labels[static_cast<std::size_t>(o)])
        throw DataError("synthetic label differs from its origin's label");
      c.points.row(q) = c.points.row(o) + b.synthetic_offsets.row(static_cast<Eigen::Index>(r));
      if (b.renormalize_synthetic) {
        const double norm = c.points.row(q).norm();
        if (norm == 0.0)
          throw NumericalError("synthetic sample collapsed to the origin");
        c.raw_norms[n + r] = norm;
        c.points.row(q) /= norm;
      }
    }
    return c;
  }

  /// Chain rule from point gradients to raw embedding gradients.
  [[nodiscard]] RowMatrix fold(RowMatrix g) const {
    const Batch &b = *batch;
    for (std::size_t r = 0; r < b.synthetic_size(); ++r) {
      const auto o = b.synthetic_origin[r];
      if (o < 0)
        continue;
      const auto q = static_cast<Eigen::Index>(n + r);
      Eigen::RowVectorXd gq = g.row(q);
      if (b.renormalize_synthetic) {
        const auto p = points.row(q);
        gq = (gq - gq.dot(p) * p) / raw_norms[n + r];
      }
      g.row(o) += gq;
    }
    RowMatrix out(static_cast<Eigen::Index>(n), g.cols());
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto z = points.row(ii);
      out.row(ii) = (g.row(ii) - g.row(ii).dot(z) * z) / raw_norms[i];
    }
    return out;
  }
};

/// Adds scale * d(||a - b||)/d(a, b) into the gradient rows of a and b.
inline void add_distance_grad(RowMatrix &g, const RowMatrix &pts, std::size_t a, std::size_t b,
                              double dist, double scale) {
  if (dist == 0.0)
    return;
  const auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
  const Eigen::RowVectorXd u = (pts.row(ia) - pts.row(ib)) * (scale / dist);
  g.row(ia) += u;
  g.row(ib) -= u;
}

inline double pair_distance(const RowMatrix &pts, std::size_t a, std::size_t b) {
  return (pts.row(static_cast<Eigen::Index>(a)) - pts.row(static_cast<Eigen::Index>(b))).norm();
}

/// log(1 + Σ exp(x_j)) and its weights d/dx_j, stable for large x.
inline double log1p_sum_exp(const std::vector<double> &x, std::vector<double> &weights) {
  weights.assign(x.size(), 0.0);
  if (x.empty())
    return 0.0;
  const double shift = std::max(0.0, *std::max_element(x.begin(), x.end()));
  double denom = std::exp(-shift);
  for (std::size_t j = 0; j < x.size(); ++j) {
    weights[j] = std::exp(x[j] - shift);
    denom += weights[j];
  }
  for (auto &w : weights)
    w /= denom;
  return shift + std::log(denom);
}

} // namespace detail

/// Contrastive loss over originals and synthetic candidates. Every original
/// is an anchor, so an original pair contributes once from each endpoint.
inline LossOutput contrastive_iaa(const Batch &batch, const LossConfig &cfg) {
  const auto cs = detail::CandidateSet::build(batch);
  const std::size_t n = cs.n, total = cs.labels.size();
  RowMatrix g = RowMatrix::Zero(cs.points.rows(), cs.points.cols());
  LossOutput out;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < total; ++j) {
      if (j == i)
        continue;
      const double d = detail::pair_distance(cs.points, i, j);
      double h;
      double sign;
      if (cs.labels[j] == cs.labels[i]) {
        h = d - cfg.pos_margin;
        sign = 1.0;
      } else {
        h = cfg.neg_margin - d;
        sign = -1.0;
      }
      if (h <= 0.0)
        continue;
      sum += h;
      ++out.active_terms;
      if (cs.is_synthetic(j))
        ++out.synthetic_active_terms;
      detail::add_distance_grad(g, cs.points, i, j, d, sign / static_cast<double>(n));
    }
  }
  out.value = n > 0 ? sum / static_cast<double>(n) : 0.0;
  out.gradients = cs.fold(std::move(g));
  return out;
}

/// Per-anchor hardest negative (candidate index; originals first, then
/// synthetic rows), or -1 when the anchor has no negative.
inline std::vector<std::int64_t> triplet_hardest_negatives(const Batch &batch) {
  const auto cs = detail::CandidateSet::build(batch);
  std::vector<std::int64_t> out(cs.n, -1);
  for (std::size_t i = 0; i < cs.n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < cs.labels.size(); ++k) {
      if (cs.labels[k] == cs.labels[i])
        continue;
      const double d = detail::pair_distance(cs.points, i, k);
      if (d < best) {
        best = d;
        out[i] = static_cast<std::int64_t>(k);
      }
    }
  }
  return out;
}

/// Triplet loss with all positives and the hardest negative per anchor,
/// both drawn from originals and synthetic samples.
inline LossOutput triplet_iaa(const Batch &batch, const LossConfig &cfg) {
  const auto cs = detail::CandidateSet::build(batch);
  const std::size_t n = cs.n, total = cs.labels.size();
  RowMatrix g = RowMatrix::Zero(cs.points.rows(), cs.points.cols());
  LossOutput out;
  double sum = 0.0;
  std::vector<std::pair<std::size_t, double>> positives;
  for (std::size_t i = 0; i < n; ++i) {
    positives.clear();
    std::size_t hardest = total;
    double hardest_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < total; ++j) {
      if (j == i)
        continue;
      const double d = detail::pair_distance(cs.points, i, j);
      if (cs.labels[j] == cs.labels[i])
        positives.emplace_back(j, d);
      else if (d < hardest_d) {
        hardest_d = d;
        hardest = j;
      }
    }
    if (positives.empty() || hardest == total) {
      ++out.skipped_anchors;
      continue;
    }
    const double scale = 1.0 / static_cast<double>(n);
    for (const auto &[j, d] : positives) {
      const double h = d - hardest_d + cfg.triplet_margin;
      if (h <= 0.0)
        continue;
      sum += h;
      ++out.active_terms;
      if (cs.is_synthetic(j) || cs.is_synthetic(hardest))
        ++out.synthetic_active_terms;
      detail::add_distance_grad(g, cs.points, i, j, d, scale);
      detail::add_distance_grad(g, cs.points, i, hardest, hardest_d, -scale);
    }
  }
  out.value = n > 0 ? sum / static_cast<double>(n) : 0.0;
  out.gradients = cs.fold(std::move(g));
  return out;
}

/// Mined multi-similarity sets for one anchor; indices into the candidate
/// list (originals first, then synthetic rows).
struct HardSets {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  bool skipped = false;
};

namespace detail {

inline double candidate_similarity(const CandidateSet &cs, std::size_t i, std::size_t j) {
  const auto q = cs.points.row(static_cast<Eigen::Index>(j));
  const double s = cs.points.row(static_cast<Eigen::Index>(i)).dot(q) / q.norm();
  return std::clamp(s, -1.0, 1.0);
}

inline std::vector<HardSets> mine(const CandidateSet &cs, double epsilon,
                                  std::vector<std::vector<double>> &sims) {
  const std::size_t n = cs.n, total = cs.labels.size();
  std::vector<HardSets> out(n);
  sims.assign(n, std::vector<double>(total, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double min_pos = std::numeric_limits<double>::infinity();
    double max_neg = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < total; ++j) {
      if (j == i)
        continue;
      const double s = candidate_similarity(cs, i, j);
      sims[i][j] = s;
      if (cs.labels[j] == cs.labels[i])
        min_pos = std::min(min_pos, s);
      else
        max_neg = std::max(max_neg, s);
    }
    if (std::isinf(min_pos) || std::isinf(max_neg)) {
      out[i].skipped = true;
      continue;
    }
    for (std::size_t j = 0; j < total; ++j) {
      if (j == i)
        continue;
      const double s = sims[i][j];
      if (cs.labels[j] == cs.labels[i]) {
        if (s < max_neg + epsilon)
          out[i].positives.push_back(j);
      } else if (s > min_pos - epsilon) {
        out[i].negatives.push_back(j);
      }
    }
  }
  return out;
}

} // namespace detail

/// Multi-similarity hard mining: negatives more similar than the least
/// similar positive (minus ε), positives less similar than the most similar
/// negative (plus ε). Extremes are taken over all candidates.
inline std::vector<HardSets> ms_mining(const Batch &batch, double epsilon) {
  const auto cs = detail::CandidateSet::build(batch);
  std::vector<std::vector<double>> sims;
  return detail::mine(cs, epsilon, sims);
}

inline LossOutput ms_iaa(const Batch &batch, const LossConfig &cfg) {
  const auto cs = detail::CandidateSet::build(batch);
  const std::size_t n = cs.n;
  RowMatrix g = RowMatrix::Zero(cs.points.rows(), cs.points.cols());
  LossOutput out;
  std::vector<std::vector<double>> sims;
  const auto sets = detail::mine(cs, cfg.ms_epsilon, sims);

  const double scale = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  double sum = 0.0;
  std::vector<double> x, w;
  // ds_ij/dz_i = q̂_j; ds_ij/dq_j = (z_i - s q̂_j) / |q_j|
  auto add_sim_grad = [&](std::size_t i, std::size_t j, double coeff) {
    const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
    const auto q = cs.points.row(jj);
    const double qn = q.norm();
    const Eigen::RowVectorXd qhat = q / qn;
    const double s = cs.points.row(ii).dot(qhat);
    g.row(ii) += coeff * qhat;
    g.row(jj) += coeff * (cs.points.row(ii) - s * qhat) / qn;
  };

  for (std::size_t i = 0; i < n; ++i) {
    const auto &hs = sets[i];
    if (hs.skipped) {
      ++out.skipped_anchors;
      continue;
    }
    out.active_terms += hs.positives.size() + hs.negatives.size();
    for (auto j : hs.positives)
      out.synthetic_active_terms += cs.is_synthetic(j) ? 1 : 0;
    for (auto k : hs.negatives)
      out.synthetic_active_terms += cs.is_synthetic(k) ? 1 : 0;

    x.clear();
    for (auto j : hs.positives)
      x.push_back(cfg.ms_alpha * (cfg.ms_lambda - sims[i][j]));
    sum += detail::log1p_sum_exp(x, w) / cfg.ms_alpha;
    for (std::size_t t = 0; t < hs.positives.size(); ++t)
      add_sim_grad(i, hs.positives[t], -w[t] * scale);

    x.clear();
    for (auto k : hs.negatives)
      x.push_back(cfg.ms_beta * (sims[i][k] - cfg.ms_lambda));
    sum += detail::log1p_sum_exp(x, w) / cfg.ms_beta;
    for (std::size_t t = 0; t < hs.negatives.size(); ++t)
      add_sim_grad(i, hs.negatives[t], w[t] * scale);
  }
  out.value = sum * scale;
  out.gradients = cs.fold(std::move(g));
  return out;
}

inline LossOutput evaluate_loss(const Batch &batch, const LossConfig &cfg) {
  cfg.validate();
  switch (cfg.kind) {
  case LossKind::contrastive:
    return contrastive_iaa(batch, cfg);
  case LossKind::triplet:
    return triplet_iaa(batch, cfg);
  case LossKind::ms:
    return ms_iaa(batch, cfg);
  }
  throw ConfigError("unknown loss kind");
}

/// Base (non-augmented) loss: the same batch with its synthetic rows dropped.
inline LossOutput evaluate_base_loss(Batch batch, const LossConfig &cfg) {
  batch.clear_synthetic();
  return evaluate_loss(batch, cfg);
}

} // namespace iaa
