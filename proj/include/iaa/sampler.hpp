#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "iaa/core.hpp"
#include "iaa/rng.hpp"

namespace iaa {

/// One epoch of P-classes × S-samples batches.
///
/// Classes are visited in shuffled order, P at a time, so each class appears
/// at least once per epoch; a short final group is topped up with other
/// randomly chosen classes. A class with fewer than S samples contributes all
/// of them and is topped up by drawing with replacement.
inline std::vector<std::vector<std::size_t>> balanced_batches(const std::vector<ClassId> &labels,
                                                              std::size_t P, std::size_t S, Rng &rng) {
  if (P < 1 || S < 1)
    throw ConfigError("balanced sampler needs P >= 1 and S >= 1");
  const ClassIndex index = build_class_index(labels);
  std::vector<ClassId> classes;
  for (std::size_t k = 0; k < index.num_classes(); ++k)
    if (!index.members[k].empty())
      classes.push_back(static_cast<ClassId>(k + 1));
  if (classes.size() < P)
    throw DataError("balanced sampler needs at least P=" + std::to_string(P) + " classes, found " +
                    std::to_string(classes.size()));

  std::shuffle(classes.begin(), classes.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < classes.size(); start += P) {
    std::vector<ClassId> group(classes.begin() + static_cast<std::ptrdiff_t>(start),
                               classes.begin() + static_cast<std::ptrdiff_t>(std::min(start + P, classes.size())));
    if (group.size() < P) {
      std::vector<ClassId> rest;
      for (auto c : classes)
        if (std::find(group.begin(), group.end(), c) == group.end())
          rest.push_back(c);
      std::shuffle(rest.begin(), rest.end(), rng);
      group.insert(group.end(), rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(P - group.size()));
    }
    std::vector<std::size_t> batch;
    batch.reserve(P * S);
    for (auto c : group) {
      std::vector<std::size_t> members = index.of(c);
      std::shuffle(members.begin(), members.end(), rng);
      if (members.size() >= S) {
        batch.insert(batch.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(S));
        continue;
      }
      batch.insert(batch.end(), members.begin(), members.end());
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      for (std::size_t t = members.size(); t < S; ++t)
        batch.push_back(members[pick(rng)]);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

} // namespace iaa
