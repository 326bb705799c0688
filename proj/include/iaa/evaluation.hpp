#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "iaa/core.hpp"
#include "iaa/parallel.hpp"

namespace iaa {

/// Exact retrieval over brute-force Euclidean neighbors.
///
/// Without a split every sample queries all other samples (self excluded).
/// With a split, query rows search the gallery rows only. Distance ties are
/// broken by ascending gallery index. A query whose class has no other
/// member in the gallery is skipped and counted.
struct RetrievalResult {
  std::vector<std::vector<std::size_t>> rankings;
  std::map<std::size_t, double> recall;
  double r_precision = 0.0;
  double map_at_r = 0.0;
  std::size_t n_queries = 0;
  std::size_t skipped_queries = 0;
};

namespace detail {

inline std::vector<std::size_t> rank_gallery(const RowMatrix &gallery,
                                             const Eigen::Ref<const Eigen::RowVectorXd> &query,
                                             std::optional<std::size_t> self) {
  std::vector<std::pair<double, std::size_t>> d;
  d.reserve(static_cast<std::size_t>(gallery.rows()));
  for (Eigen::Index j = 0; j < gallery.rows(); ++j) {
    if (self && static_cast<std::size_t>(j) == *self)
      continue;
    d.emplace_back((gallery.row(j) - query).norm(), static_cast<std::size_t>(j));
  }
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out;
  out.reserve(d.size());
  for (const auto &p : d)
    out.push_back(p.second);
  return out;
}

struct QueryScore {
  bool valid = false;
  std::vector<bool> hit_at;  // hit_at[k-1]: a positive within top-k, for requested ks
  double rp = 0.0;
  double ap = 0.0;
};

} // namespace detail

inline RetrievalResult evaluate_retrieval(const RowMatrix &queries, const std::vector<ClassId> &query_labels,
                                          const RowMatrix &gallery, const std::vector<ClassId> &gallery_labels,
                                          const std::vector<std::size_t> &ks, bool self_excluded,
                                          bool keep_rankings = false) {
  if (static_cast<std::size_t>(queries.rows()) != query_labels.size() ||
      static_cast<std::size_t>(gallery.rows()) != gallery_labels.size())
    throw DataError("retrieval: rows do not match labels");
  if (queries.cols() != gallery.cols())
    throw DataError("retrieval: query and gallery dimensions differ");
  const std::size_t candidates = gallery_labels.size() - (self_excluded ? 1 : 0);
  for (auto k : ks)
    if (k < 1 || k > candidates)
      throw DataError("recall@" + std::to_string(k) + " needs K below the gallery size (" +
                      std::to_string(gallery_labels.size()) + ")");

  std::map<ClassId, std::size_t> class_size;
  for (auto c : gallery_labels)
    ++class_size[c];

  const std::size_t nq = query_labels.size();
  std::vector<detail::QueryScore> scores(nq);
  std::vector<std::vector<std::size_t>> rankings(keep_rankings ? nq : 0);
  parallel_for(nq, [&](std::size_t q) {
    const ClassId c = query_labels[q];
    auto it = class_size.find(c);
    const std::size_t R = it == class_size.end() ? 0 : it->second - (self_excluded ? 1 : 0);
    auto rank = detail::rank_gallery(gallery, queries.row(static_cast<Eigen::Index>(q)),
                                     self_excluded ? std::optional<std::size_t>(q) : std::nullopt);
    auto &s = scores[q];
    if (R > 0) {
      s.valid = true;
      std::size_t first_hit = rank.size();
      for (std::size_t r = 0; r < rank.size(); ++r)
        if (gallery_labels[rank[r]] == c) {
          first_hit = r;
          break;
        }
      for (auto k : ks)
        s.hit_at.push_back(first_hit < k);
      std::size_t hits = 0;
      double ap = 0.0;
      for (std::size_t r = 0; r < R; ++r)
        if (gallery_labels[rank[r]] == c) {
          ++hits;
          ap += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
      s.rp = static_cast<double>(hits) / static_cast<double>(R);
      s.ap = ap / static_cast<double>(R);
    }
    if (keep_rankings)
      rankings[q] = std::move(rank);
  });

  RetrievalResult res;
  res.rankings = std::move(rankings);
  std::vector<std::size_t> hits(ks.size(), 0);
  double rp = 0.0, map = 0.0;
  for (const auto &s : scores) {
    if (!s.valid) {
      ++res.skipped_queries;
      continue;
    }
    ++res.n_queries;
    for (std::size_t t = 0; t < ks.size(); ++t)
      hits[t] += s.hit_at[t] ? 1 : 0;
    rp += s.rp;
    map += s.ap;
  }
  const double nv = static_cast<double>(res.n_queries);
  for (std::size_t t = 0; t < ks.size(); ++t)
    res.recall[ks[t]] = res.n_queries ? static_cast<double>(hits[t]) / nv : 0.0;
  res.r_precision = res.n_queries ? rp / nv : 0.0;
  res.map_at_r = res.n_queries ? map / nv : 0.0;
  return res;
}

/// Single-split protocol: every sample queries all the others.
inline RetrievalResult evaluate_retrieval(const RowMatrix &embeddings, const std::vector<ClassId> &labels,
                                          const std::vector<std::size_t> &ks, bool keep_rankings = false) {
  return evaluate_retrieval(embeddings, labels, embeddings, labels, ks, true, keep_rankings);
}

inline double recall_at_k(const RowMatrix &embeddings, const std::vector<ClassId> &labels, std::size_t k) {
  return evaluate_retrieval(embeddings, labels, {k}).recall.at(k);
}

inline double r_precision(const RowMatrix &embeddings, const std::vector<ClassId> &labels) {
  return evaluate_retrieval(embeddings, labels, {}).r_precision;
}

inline double map_at_r(const RowMatrix &embeddings, const std::vector<ClassId> &labels) {
  return evaluate_retrieval(embeddings, labels, {}).map_at_r;
}

/// Counts of positive and negative pair cosine similarities, over all
/// unordered pairs i < j, in equal-width bins covering [-1, 1].
struct SimilarityHistogram {
  std::size_t bins = 100;
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;

  [[nodiscard]] double lower(std::size_t b) const {
    return (2.0 * static_cast<double>(b) - static_cast<double>(bins)) / static_cast<double>(bins);
  }
  [[nodiscard]] double upper(std::size_t b) const { return lower(b + 1); }

  /// Bin of a similarity; s = 1 falls into the last bin.
  [[nodiscard]] std::size_t bin_of(double s) const {
    const double t = std::floor((s + 1.0) * static_cast<double>(bins) / 2.0);
    if (t < 0.0)
      return 0;
    return std::min(bins - 1, static_cast<std::size_t>(t));
  }
};

inline SimilarityHistogram similarity_histogram(const RowMatrix &embeddings, const std::vector<ClassId> &labels,
                                                std::size_t bins = 100) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size())
    throw DataError("histogram: embeddings and labels disagree in length");
  if (bins < 1)
    throw ConfigError("histogram needs at least one bin");
  SimilarityHistogram h;
  h.bins = bins;
  h.positive.assign(bins, 0);
  h.negative.assign(bins, 0);
  const RowMatrix z = normalize_rows(embeddings);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = i + 1; j < z.rows(); ++j) {
      const double s = std::clamp(z.row(i).dot(z.row(j)), -1.0, 1.0);
      auto &counts = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)] ? h.positive : h.negative;
      ++counts[h.bin_of(s)];
    }
  return h;
}

} // namespace iaa
