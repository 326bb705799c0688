#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "iaa/error.hpp"

namespace iaa {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense class id in [1..C].
using ClassId = int;

inline void require_same_dim(const Eigen::Ref<const Vector> &a, const Eigen::Ref<const Vector> &b) {
  if (a.size() != b.size())
    throw DataError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
}

inline double euclidean_distance(const Eigen::Ref<const Vector> &a,
                                 const Eigen::Ref<const Vector> &b) {
  require_same_dim(a, b);
  return (a - b).norm();
}

inline double cosine_similarity(const Eigen::Ref<const Vector> &a,
                                const Eigen::Ref<const Vector> &b) {
  require_same_dim(a, b);
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0)
    throw NumericalError("cosine similarity of a zero-norm vector");
  const double s = a.dot(b) / (na * nb);
  return std::clamp(s, -1.0, 1.0);
}

inline Vector l2_normalize(const Eigen::Ref<const Vector> &a) {
  const double n = a.norm();
  if (n == 0.0 || !std::isfinite(n))
    throw NumericalError("cannot normalize a zero-norm vector");
  return a / n;
}

/// Labeled embedding matrix. Class ids are remapped to dense [1..C] in
/// first-appearance order; `original_ids[c-1]` keeps the id seen on input.
class Dataset {
public:
  Dataset() = default;

  /// Builds a dataset from raw (possibly sparse) labels, remapping them.
  static Dataset from_raw(RowMatrix embeddings, const std::vector<std::int64_t> &raw_labels,
                          std::string name = {}) {
    if (embeddings.rows() != static_cast<Eigen::Index>(raw_labels.size()))
      throw DataError("embedding rows (" + std::to_string(embeddings.rows()) +
                      ") do not match label count (" + std::to_string(raw_labels.size()) + ")");
    if (raw_labels.empty())
      throw DataError("dataset must contain at least one sample");
    if (embeddings.cols() < 1)
      throw DataError("embedding dimension must be at least 1");
    if (!embeddings.allFinite())
      throw DataError("dataset contains non-finite values");

    Dataset d;
    d.embeddings_ = std::move(embeddings);
    d.name_ = std::move(name);
    std::unordered_map<std::int64_t, ClassId> remap;
    d.labels_.reserve(raw_labels.size());
    for (auto raw : raw_labels) {
      auto [it, inserted] = remap.try_emplace(raw, static_cast<ClassId>(d.original_ids_.size() + 1));
      if (inserted)
        d.original_ids_.push_back(raw);
      d.labels_.push_back(it->second);
    }
    return d;
  }

  [[nodiscard]] std::size_t size() const { return labels_.size(); }
  [[nodiscard]] std::size_t dim() const { return static_cast<std::size_t>(embeddings_.cols()); }
  [[nodiscard]] std::size_t num_classes() const { return original_ids_.size(); }

  [[nodiscard]] const RowMatrix &embeddings() const { return embeddings_; }
  [[nodiscard]] const std::vector<ClassId> &labels() const { return labels_; }
  [[nodiscard]] const std::vector<std::int64_t> &original_ids() const { return original_ids_; }
  [[nodiscard]] const std::string &name() const { return name_; }

  [[nodiscard]] std::int64_t original_id(ClassId c) const {
    return original_ids_.at(static_cast<std::size_t>(c - 1));
  }

  /// Labels translated back to the ids seen on input.
  [[nodiscard]] std::vector<std::int64_t> raw_labels() const {
    std::vector<std::int64_t> out;
    out.reserve(labels_.size());
    for (auto c : labels_)
      out.push_back(original_id(c));
    return out;
  }

  [[nodiscard]] auto row(std::size_t i) const {
    return embeddings_.row(static_cast<Eigen::Index>(i));
  }

private:
  RowMatrix embeddings_;
  std::vector<ClassId> labels_;
  std::vector<std::int64_t> original_ids_;
  std::string name_;
};

/// Partition of sample indices by dense class id; members ascend.
struct ClassIndex {
  std::vector<std::vector<std::size_t>> members;

  [[nodiscard]] std::size_t num_classes() const { return members.size(); }
  [[nodiscard]] const std::vector<std::size_t> &of(ClassId c) const {
    return members.at(static_cast<std::size_t>(c - 1));
  }
  [[nodiscard]] std::size_t count(ClassId c) const { return of(c).size(); }
};

/// Groups sample indices by label. Labels must be dense ids in [1..C].
inline ClassIndex build_class_index(const std::vector<ClassId> &labels) {
  ClassIndex idx;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const ClassId c = labels[i];
    if (c < 1)
      throw DataError("class ids must be >= 1");
    if (static_cast<std::size_t>(c) > idx.members.size())
      idx.members.resize(static_cast<std::size_t>(c));
    idx.members[static_cast<std::size_t>(c - 1)].push_back(i);
  }
  return idx;
}

/// Row-wise L2 normalization of a matrix.
inline RowMatrix normalize_rows(const RowMatrix &m) {
  RowMatrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n == 0.0)
      throw NumericalError("cannot normalize a zero-norm row " + std::to_string(i));
    out.row(i) /= n;
  }
  return out;
}

} // namespace iaa
