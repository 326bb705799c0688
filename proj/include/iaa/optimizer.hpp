#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "iaa/core.hpp"

namespace iaa {

enum class OptimizerKind { sgd, adam };

inline const char *to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind optimizer_kind_from(std::string_view s) {
  if (s == "sgd")
    return OptimizerKind::sgd;
  if (s == "adam")
    return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// L2 penalty added to the gradient.
  double weight_decay = 0.0;

  void validate() const {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("adam betas must lie in [0, 1)");
    if (!(epsilon > 0.0))
      throw ConfigError("adam epsilon must be > 0");
    if (weight_decay < 0.0)
      throw ConfigError("weight_decay must be >= 0");
  }
};

/// SGD or Adam with bias-corrected moments.
class Optimizer {
public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  void step(Vector &params, const Vector &grad, double lr) {
    Vector g = grad;
    if (cfg_.weight_decay > 0.0)
      g += cfg_.weight_decay * params;
    if (cfg_.kind == OptimizerKind::sgd) {
      params -= lr * g;
      return;
    }
    if (m_.size() != params.size()) {
      m_ = Vector::Zero(params.size());
      v_ = Vector::Zero(params.size());
      t_ = 0;
    }
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * g;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Eigen::Index i = 0; i < params.size(); ++i)
      params(i) -= lr * (m_(i) / c1) / (std::sqrt(v_(i) / c2) + cfg_.epsilon);
  }

  [[nodiscard]] long steps() const { return t_; }

private:
  OptimizerConfig cfg_;
  Vector m_;
  Vector v_;
  long t_ = 0;
};

} // namespace iaa
