#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "iaa/correction.hpp"
#include "iaa/correlation.hpp"
#include "iaa/evaluation.hpp"
#include "iaa/io.hpp"
#include "iaa/trainer.hpp"
#include "iaa/world.hpp"

namespace iaa {

using Json = nlohmann::json;

namespace detail {

/// Reads fields from a JSON object and rejects keys nobody asked for.
class StrictObject {
public:
  StrictObject(const Json &j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object())
      throw ConfigError(where_ + ": expected a JSON object");
  }

  ~StrictObject() noexcept(false) {
    if (std::uncaught_exceptions() > 0)
      return;
    for (const auto &[key, _] : j_.items())
      if (!seen_.count(key))
        throw ConfigError(where_ + ": unknown key '" + key + "'");
  }

  StrictObject(const StrictObject &) = delete;
  StrictObject &operator=(const StrictObject &) = delete;

  template <typename T> void get(const char *key, T &out) {
    seen_.insert(key);
    if (!j_.contains(key))
      return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception &e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  /// Real that may also be the string "inf".
  void get_extended(const char *key, double &out) {
    seen_.insert(key);
    if (!j_.contains(key))
      return;
    const auto &v = j_.at(key);
    if (v.is_string() && (v.get<std::string>() == "inf" || v.get<std::string>() == "infinity"))
      out = std::numeric_limits<double>::infinity();
    else if (v.is_number())
      out = v.get<double>();
    else
      throw ConfigError(where_ + "." + key + ": expected a number or \"inf\"");
  }

  template <typename Fn> void get_with(const char *key, Fn &&fn) {
    seen_.insert(key);
    if (j_.contains(key))
      fn(j_.at(key), where_ + "." + key);
  }

  void mark(const char *key) { seen_.insert(key); }

private:
  const Json &j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline Json extended(double v) {
  if (std::isinf(v))
    return "inf";
  return v;
}

inline std::string get_string(const Json &j, const std::string &where) {
  if (!j.is_string())
    throw ConfigError(where + ": expected a string");
  return j.get<std::string>();
}

inline Json vector_json(const Eigen::Ref<const Vector> &v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    a.push_back(v(i));
  return a;
}

inline Json matrix_json(const Eigen::MatrixXd &m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    rows.push_back(vector_json(m.row(i).transpose()));
  return rows;
}

inline Vector vector_from(const Json &j, std::size_t dim, const std::string &where) {
  if (!j.is_array() || j.size() != dim)
    throw DataError(where + ": expected an array of " + std::to_string(dim) + " numbers");
  Vector v(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) {
    if (!j[i].is_number())
      throw DataError(where + ": non-numeric entry");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    if (!std::isfinite(v(static_cast<Eigen::Index>(i))))
      throw DataError(where + ": non-finite entry");
  }
  return v;
}

inline Eigen::MatrixXd matrix_from(const Json &j, std::size_t dim, const std::string &where) {
  if (!j.is_array() || j.size() != dim)
    throw DataError(where + ": expected " + std::to_string(dim) + " rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i)
    m.row(static_cast<Eigen::Index>(i)) = vector_from(j[i], dim, where).transpose();
  return m;
}

} // namespace detail

// ---- configs ---------------------------------------------------------------

inline Json to_json(const DistanceMetricConfig &c) {
  return {{"p", c.p}, {"square_mean", c.square_mean}, {"sqrt_cov", c.sqrt_cov}};
}

inline void from_json(const Json &j, DistanceMetricConfig &c, const std::string &where = "metric") {
  detail::StrictObject o(j, where);
  o.get("p", c.p);
  o.get("square_mean", c.square_mean);
  o.get("sqrt_cov", c.sqrt_cov);
}

inline Json to_json(const CorrectionConfig &c) {
  return {{"k", c.neighbors},         {"sigma_m", detail::extended(c.sigma_m)},
          {"sigma_cv", detail::extended(c.sigma_cv)}, {"beta", c.beta},
          {"tau", c.tau},             {"gamma", c.gamma},
          {"include_self", c.include_self}, {"metric", to_json(c.metric)}};
}

inline void from_json(const Json &j, CorrectionConfig &c, const std::string &where = "correction") {
  detail::StrictObject o(j, where);
  o.get("k", c.neighbors);
  o.get_extended("sigma_m", c.sigma_m);
  o.get_extended("sigma_cv", c.sigma_cv);
  o.get("beta", c.beta);
  o.get("tau", c.tau);
  o.get("gamma", c.gamma);
  o.get("include_self", c.include_self);
  o.get_with("metric", [&](const Json &v, const std::string &w) { from_json(v, c.metric, w); });
}

inline Json to_json(const AugmentConfig &c) {
  return {{"lambda", c.lambda},
          {"m", c.per_sample},
          {"strategy", to_string(c.strategy)},
          {"seed", c.seed},
          {"renormalize", c.renormalize}};
}

inline void from_json(const Json &j, AugmentConfig &c, const std::string &where = "augment") {
  detail::StrictObject o(j, where);
  o.get("lambda", c.lambda);
  o.get("m", c.per_sample);
  o.get_with("strategy", [&](const Json &v, const std::string &w) {
    c.strategy = augment_strategy_from(detail::get_string(v, w));
  });
  o.get("seed", c.seed);
  o.get("renormalize", c.renormalize);
}

inline Json to_json(const LossConfig &c) {
  return {{"variant", to_string(c.kind)},    {"pos_margin", c.pos_margin},
          {"neg_margin", c.neg_margin},      {"triplet_margin", c.triplet_margin},
          {"ms_alpha", c.ms_alpha},          {"ms_beta", c.ms_beta},
          {"ms_lambda", c.ms_lambda},        {"ms_epsilon", c.ms_epsilon}};
}

inline void from_json(const Json &j, LossConfig &c, const std::string &where = "loss") {
  detail::StrictObject o(j, where);
  o.get_with("variant", [&](const Json &v, const std::string &w) { c.kind = loss_kind_from(detail::get_string(v, w)); });
  o.get("pos_margin", c.pos_margin);
  o.get("neg_margin", c.neg_margin);
  o.get("triplet_margin", c.triplet_margin);
  o.get("ms_alpha", c.ms_alpha);
  o.get("ms_beta", c.ms_beta);
  o.get("ms_lambda", c.ms_lambda);
  o.get("ms_epsilon", c.ms_epsilon);
}

inline Json to_json(const OptimizerConfig &c) {
  return {{"type", to_string(c.kind)}, {"beta1", c.beta1}, {"beta2", c.beta2},
          {"epsilon", c.epsilon},      {"weight_decay", c.weight_decay}};
}

inline void from_json(const Json &j, OptimizerConfig &c, const std::string &where = "optimizer") {
  detail::StrictObject o(j, where);
  o.get_with("type", [&](const Json &v, const std::string &w) { c.kind = optimizer_kind_from(detail::get_string(v, w)); });
  o.get("beta1", c.beta1);
  o.get("beta2", c.beta2);
  o.get("epsilon", c.epsilon);
  o.get("weight_decay", c.weight_decay);
}

inline Json to_json(const EncoderConfig &c) {
  return {{"architecture", to_string(c.architecture)},
          {"hidden_dim", c.hidden_dim},
          {"embedding_dim", c.embedding_dim}};
}

inline void from_json(const Json &j, EncoderConfig &c, const std::string &where = "encoder") {
  detail::StrictObject o(j, where);
  o.get_with("architecture", [&](const Json &v, const std::string &w) {
    c.architecture = architecture_from(detail::get_string(v, w));
  });
  o.get("hidden_dim", c.hidden_dim);
  o.get("embedding_dim", c.embedding_dim);
}

inline Json to_json(const TrainConfig &c) {
  return {{"epochs", c.epochs},
          {"classes_per_batch", c.classes_per_batch},
          {"samples_per_class", c.samples_per_class},
          {"learning_rate", c.learning_rate},
          {"lr_decay_epochs", c.lr_decay_epochs},
          {"lr_decay_factor", c.lr_decay_factor},
          {"optimizer", to_json(c.optimizer)},
          {"stats_interval", c.stats_interval},
          {"covariance_mode", to_string(c.covariance_mode)},
          {"apply_correction", c.apply_correction},
          {"baseline", c.baseline},
          {"ablation", c.ablation},
          {"encoder", to_json(c.encoder)},
          {"correction", to_json(c.correction)},
          {"augment", to_json(c.augment)},
          {"loss", to_json(c.loss)},
          {"seed", c.seed}};
}

inline void from_json(const Json &j, TrainConfig &c, const std::string &where = "config") {
  detail::StrictObject o(j, where);
  o.get("epochs", c.epochs);
  o.get("classes_per_batch", c.classes_per_batch);
  o.get("samples_per_class", c.samples_per_class);
  o.get("learning_rate", c.learning_rate);
  o.get("lr_decay_epochs", c.lr_decay_epochs);
  o.get("lr_decay_factor", c.lr_decay_factor);
  o.get_with("optimizer", [&](const Json &v, const std::string &w) { from_json(v, c.optimizer, w); });
  o.get("stats_interval", c.stats_interval);
  o.get_with("covariance_mode", [&](const Json &v, const std::string &w) {
    c.covariance_mode = covariance_mode_from(detail::get_string(v, w));
  });
  o.get("apply_correction", c.apply_correction);
  o.get("baseline", c.baseline);
  o.get("ablation", c.ablation);
  o.get_with("encoder", [&](const Json &v, const std::string &w) { from_json(v, c.encoder, w); });
  o.get_with("correction", [&](const Json &v, const std::string &w) { from_json(v, c.correction, w); });
  o.get_with("augment", [&](const Json &v, const std::string &w) { from_json(v, c.augment, w); });
  o.get_with("loss", [&](const Json &v, const std::string &w) { from_json(v, c.loss, w); });
  o.get("seed", c.seed);
}

inline Json to_json(const WorldConfig &c) {
  return {{"classes", c.classes},
          {"input_dim", c.input_dim},
          {"embedding_dim", c.embedding_dim},
          {"min_samples", c.min_samples},
          {"max_samples", c.max_samples},
          {"corr_knob", c.corr_knob},
          {"variance_floor", c.variance_floor},
          {"variance_scale", c.variance_scale},
          {"input_noise", c.input_noise},
          {"holdout_classes", c.holdout_classes},
          {"holdout_min_samples", c.holdout_min_samples},
          {"holdout_max_samples", c.holdout_max_samples},
          {"seed", c.seed}};
}

inline void from_json(const Json &j, WorldConfig &c, const std::string &where = "world") {
  detail::StrictObject o(j, where);
  o.get("classes", c.classes);
  o.get("input_dim", c.input_dim);
  o.get("embedding_dim", c.embedding_dim);
  o.get("min_samples", c.min_samples);
  o.get("max_samples", c.max_samples);
  o.get("corr_knob", c.corr_knob);
  o.get("variance_floor", c.variance_floor);
  o.get("variance_scale", c.variance_scale);
  o.get("input_noise", c.input_noise);
  o.get("holdout_classes", c.holdout_classes);
  o.get("holdout_min_samples", c.holdout_min_samples);
  o.get("holdout_max_samples", c.holdout_max_samples);
  o.get("seed", c.seed);
}

// ---- statistics documents ----------------------------------------------------

/// Class statistics as exchanged between CLI stages. Class ids in the JSON
/// are the dataset's original ids; in memory they are dense.
struct StatsDocument {
  std::vector<ClassStats> classes;
  GlobalStats global;
  std::vector<std::int64_t> original_ids;
  std::optional<std::vector<ClassCorrection>> corrections;
};

inline Json to_json(const StatsDocument &doc) {
  const auto &g = doc.global.cov;
  Json classes = Json::array();
  auto original = [&](ClassId c) { return doc.original_ids.at(static_cast<std::size_t>(c - 1)); };
  for (std::size_t k = 0; k < doc.classes.size(); ++k) {
    const auto &s = doc.classes[k];
    Json e = {{"class_id", original(s.class_id)},
              {"n", s.count},
              {"mean", detail::vector_json(s.mean)},
              {"cov_diag", detail::vector_json(s.cov.diagonal())}};
    if (s.cov.mode == CovarianceMode::full)
      e["cov"] = detail::matrix_json(s.cov.values);
    if (doc.corrections) {
      const auto &c = doc.corrections->at(k);
      Json ids = Json::array();
      for (auto id : c.neighbors)
        ids.push_back(original(id));
      e["alpha"] = c.alpha;
      e["neighbors"] = ids;
      e["weights"] = c.weights;
    }
    classes.push_back(std::move(e));
  }
  Json j = {{"mode", to_string(g.mode)},
            {"dim", g.dim()},
            {"classes", classes},
            {"global_cov", detail::vector_json(g.diagonal())},
            {"total_count", doc.global.total_count}};
  if (g.mode == CovarianceMode::full)
    j["global_cov_full"] = detail::matrix_json(g.values);
  return j;
}

inline StatsDocument stats_from_json(const Json &j) {
  StatsDocument doc;
  try {
    const auto mode = covariance_mode_from(j.at("mode").get<std::string>());
    const auto dim = j.at("dim").get<std::size_t>();
    const auto &classes = j.at("classes");
    if (!classes.is_array() || classes.empty())
      throw DataError("stats: 'classes' must be a non-empty array");
    std::map<std::int64_t, ClassId> dense;
    for (std::size_t k = 0; k < classes.size(); ++k) {
      const auto id = classes[k].at("class_id").get<std::int64_t>();
      if (!dense.emplace(id, static_cast<ClassId>(k + 1)).second)
        throw DataError("stats: duplicate class_id " + std::to_string(id));
      doc.original_ids.push_back(id);
    }
    bool corrected = classes[0].contains("alpha");
    if (corrected)
      doc.corrections.emplace();
    for (std::size_t k = 0; k < classes.size(); ++k) {
      const auto &e = classes[k];
      const std::string where = "stats.classes[" + std::to_string(k) + "]";
      ClassStats s;
      s.class_id = static_cast<ClassId>(k + 1);
      s.count = e.at("n").get<std::size_t>();
      if (s.count < 1)
        throw DataError(where + ": n must be >= 1");
      s.mean = detail::vector_from(e.at("mean"), dim, where + ".mean");
      s.cov.mode = mode;
      if (mode == CovarianceMode::diagonal) {
        s.cov.values = detail::vector_from(e.at("cov_diag"), dim, where + ".cov_diag");
      } else {
        s.cov.values = detail::matrix_from(e.at("cov"), dim, where + ".cov");
      }
      if ((s.cov.diagonal().array() < 0.0).any())
        throw DataError(where + ": negative variance");
      doc.classes.push_back(std::move(s));
      if (corrected) {
        ClassCorrection c;
        c.alpha = e.at("alpha").get<double>();
        for (auto id : e.at("neighbors").get<std::vector<std::int64_t>>()) {
          auto it = dense.find(id);
          if (it == dense.end())
            throw DataError(where + ": unknown neighbor id " + std::to_string(id));
          c.neighbors.push_back(it->second);
        }
        c.weights = e.at("weights").get<std::vector<double>>();
        doc.corrections->push_back(std::move(c));
      }
    }
    doc.global.cov.mode = mode;
    doc.global.cov.values = mode == CovarianceMode::diagonal
                                ? Eigen::MatrixXd(detail::vector_from(j.at("global_cov"), dim, "stats.global_cov"))
                                : detail::matrix_from(j.at("global_cov_full"), dim, "stats.global_cov_full");
    doc.global.total_count = j.at("total_count").get<std::size_t>();
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("malformed stats document: ") + e.what());
  }
  return doc;
}

// ---- reports -------------------------------------------------------------------

inline Json to_json(const CorrelationReport &r) {
  return {{"per_class_rho", r.per_class_rho}, {"mean_rho", r.mean_rho}, {"config", to_json(r.config)}};
}

inline std::string curves_csv(const CorrelationReport &r) {
  std::ostringstream os;
  os << "rank_index,mean_dist_norm,cov_dist_norm\n";
  for (std::size_t i = 0; i < r.mean_curve.size(); ++i)
    os << i << ',' << detail::format_double(r.mean_curve[i]) << ','
       << detail::format_double(r.cov_curve[i]) << '\n';
  return os.str();
}

inline std::string histogram_csv(const SimilarityHistogram &h) {
  std::ostringstream os;
  os << "bin_lower,bin_upper,positive,negative\n";
  for (std::size_t b = 0; b < h.bins; ++b)
    os << detail::format_double(h.lower(b)) << ',' << detail::format_double(h.upper(b)) << ',' << h.positive[b]
       << ',' << h.negative[b] << '\n';
  return os.str();
}

inline Json retrieval_json(const std::map<std::size_t, double> &recall, double rp, double map,
                           std::size_t n_queries) {
  Json j;
  for (std::size_t k : {1u, 2u, 4u, 8u}) {
    auto it = recall.find(k);
    j["recall@" + std::to_string(k)] = it == recall.end() ? Json(nullptr) : Json(it->second);
  }
  j["rp"] = rp;
  j["map_at_r"] = map;
  j["n_queries"] = n_queries;
  return j;
}

inline Json to_json(const EpochRecord &r, bool with_timing) {
  Json j = {{"epoch", r.epoch},
            {"loss_mean", r.loss_mean},
            {"learning_rate", r.learning_rate},
            {"batches", r.batches},
            {"active_terms", r.active_terms},
            {"synthetic_active_terms", r.synthetic_active_terms},
            {"synthetic_ratio", r.synthetic_ratio},
            {"skipped_anchors", r.skipped_anchors}};
  if (r.eval)
    j["eval"] = retrieval_json(r.eval->recall, r.eval->r_precision, r.eval->map_at_r, r.eval->n_queries);
  if (with_timing)
    j["wall_time_s"] = r.wall_time_s;
  return j;
}

} // namespace iaa
