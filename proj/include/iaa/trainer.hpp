#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include "iaa/augmentation.hpp"
#include "iaa/correction.hpp"
#include "iaa/encoder.hpp"
#include "iaa/evaluation.hpp"
#include "iaa/losses.hpp"
#include "iaa/optimizer.hpp"
#include "iaa/sampler.hpp"
#include "iaa/stats.hpp"

namespace iaa {

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t classes_per_batch = 8;
  std::size_t samples_per_class = 4;
  double learning_rate = 1e-3;
  /// Multiply the rate by `lr_decay_factor` at each listed epoch.
  std::vector<std::size_t> lr_decay_epochs;
  double lr_decay_factor = 0.2;
  OptimizerConfig optimizer{};
  /// Class statistics are re-estimated every this many epochs.
  std::size_t stats_interval = 4;
  CovarianceMode covariance_mode = CovarianceMode::diagonal;
  bool apply_correction = true;
  /// Skip statistics and augmentation altogether (plain metric learning).
  bool baseline = false;
  /// Required to train with fixed-strategy samples.
  bool ablation = false;
  EncoderConfig encoder{};
  CorrectionConfig correction{};
  AugmentConfig augment{};
  LossConfig loss{};
  std::uint64_t seed = 0;

  void validate() const {
    if (classes_per_batch < 2 || samples_per_class < 2)
      throw ConfigError("batches need P >= 2 classes and S >= 2 samples per class");
    if (stats_interval < 1)
      throw ConfigError("stats_interval must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning_rate must be a finite number >= 0");
    if (!(lr_decay_factor > 0.0))
      throw ConfigError("lr_decay_factor must be > 0");
    if (augment.strategy == AugmentStrategy::fixed && !ablation && !baseline && augment.per_sample > 0)
      throw ConfigError("fixed-strategy generation is only accepted in ablation mode");
    optimizer.validate();
    encoder.validate();
    correction.validate();
    augment.validate();
    loss.validate();
  }

  [[nodiscard]] double rate_at(std::size_t epoch) const {
    double lr = learning_rate;
    for (auto e : lr_decay_epochs)
      if (epoch >= e)
        lr *= lr_decay_factor;
    return lr;
  }
};

struct EvalMetrics {
  std::map<std::size_t, double> recall;
  double r_precision = 0.0;
  double map_at_r = 0.0;
  std::size_t n_queries = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_mean = 0.0;
  double learning_rate = 0.0;
  std::size_t batches = 0;
  std::size_t active_terms = 0;
  std::size_t synthetic_active_terms = 0;
  std::size_t skipped_anchors = 0;
  /// Share of active terms that involve a synthetic sample.
  double synthetic_ratio = 0.0;
  std::optional<EvalMetrics> eval;
  double wall_time_s = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  Encoder encoder;
  RunLog log;
};

/// Recall@{1,2,4,8} (those the gallery admits), RP and MAP@R.
inline EvalMetrics evaluate_embeddings(const RowMatrix &embeddings, const std::vector<ClassId> &labels) {
  std::vector<std::size_t> ks;
  for (std::size_t k : {1u, 2u, 4u, 8u})
    if (k < labels.size())
      ks.push_back(k);
  auto r = evaluate_retrieval(embeddings, labels, ks);
  return {r.recall, r.r_precision, r.map_at_r, r.n_queries};
}

/// Class statistics used for generation, from the whole training set passed
/// through the current encoder.
inline std::vector<ClassStats> generation_stats(const Encoder &encoder, const Dataset &data,
                                                const ClassIndex &index, const TrainConfig &cfg) {
  const auto z = Dataset::from_raw(encoder.embed(data.embeddings()), data.raw_labels());
  auto stats = estimate_class_stats(z, index, cfg.covariance_mode);
  if (!cfg.apply_correction)
    return stats;
  const auto global = estimate_global_covariance(stats);
  return correct_covariance(stats, global, cfg.correction).classes;
}

/// Full training loop. Every `stats_interval` epochs (starting before the
/// first step) the class statistics are re-estimated and corrected; each
/// batch is embedded, augmented with M samples per original, scored by the
/// configured loss and back-propagated through the encoder.
///
/// `epoch_hook` sees each finished record (for streaming logs).
inline TrainResult train(const Dataset &data, const TrainConfig &cfg,
                         const Dataset *holdout = nullptr,
                         const std::function<void(const EpochRecord &)> &epoch_hook = {}) {
  cfg.validate();
  const ClassIndex index = build_class_index(data.labels());
  Encoder encoder = Encoder::initialized(data.dim(), cfg.encoder, cfg.seed);
  Optimizer optimizer(cfg.optimizer);
  AugmentConfig aug = cfg.augment;
  aug.seed = stream_seed(cfg.seed, {static_cast<std::uint64_t>(Stream::augment)});
  const bool augmenting = !cfg.baseline;

  TrainResult result;
  std::vector<ClassStats> stats;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (augmenting && epoch % cfg.stats_interval == 0)
      stats = generation_stats(encoder, data, index, cfg);

    Rng sampler_rng = keyed_rng(cfg.seed, Stream::sampler, {epoch});
    const auto batches = balanced_batches(data.labels(), cfg.classes_per_batch, cfg.samples_per_class, sampler_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = cfg.rate_at(epoch);
    double loss_sum = 0.0;

    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto &ids = batches[b];
      RowMatrix x(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(data.dim()));
      Batch batch;
      batch.labels.reserve(ids.size());
      for (std::size_t t = 0; t < ids.size(); ++t) {
        x.row(static_cast<Eigen::Index>(t)) = data.row(ids[t]);
        batch.labels.push_back(data.labels()[ids[t]]);
      }
      Encoder::Cache cache;
      batch.embeddings = encoder.forward(x, &cache);
      batch.clear_synthetic();

      LossOutput out;
      if (!augmenting) {
        out = evaluate_base_loss(batch, cfg.loss);
      } else {
        if (aug.per_sample > 0) {
          const GenerationKey key{epoch, b};
          const auto syn = aug.strategy == AugmentStrategy::dynamic
                               ? generate_dynamic(normalize_rows(batch.embeddings), batch.labels, stats, aug, key)
                               : generate_fixed(batch.labels, stats, aug, key);
          batch.attach(syn, aug.renormalize);
        }
        out = evaluate_loss(batch, cfg.loss);
      }

      if (!std::isfinite(out.value) || !out.gradients.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << b << ": value=" << out.value
            << ", parameter norm=" << encoder.parameters().norm() << ", batch indices=[";
        for (std::size_t t = 0; t < ids.size(); ++t)
          msg << (t ? "," : "") << ids[t];
        msg << "]";
        throw NumericalError(msg.str());
      }

      const Vector grad = encoder.backward(cache, out.gradients);
      optimizer.step(encoder.parameters(), grad, rec.learning_rate);

      loss_sum += out.value;
      rec.active_terms += out.active_terms;
      rec.synthetic_active_terms += out.synthetic_active_terms;
      rec.skipped_anchors += out.skipped_anchors;
    }
    rec.batches = batches.size();
    rec.loss_mean = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
    rec.synthetic_ratio = rec.active_terms ? static_cast<double>(rec.synthetic_active_terms) /
                                                 static_cast<double>(rec.active_terms)
                                           : 0.0;
    if (holdout)
      rec.eval = evaluate_embeddings(encoder.embed(holdout->embeddings()), holdout->labels());
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (epoch_hook)
      epoch_hook(rec);
    result.log.epochs.push_back(std::move(rec));
  }
  result.encoder = std::move(encoder);
  return result;
}

} // namespace iaa
