// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "geneo/backward.hpp"
#include "geneo/checkpoint.hpp"
#include "geneo/losses.hpp"
#include "geneo/metrics.hpp"
#include "geneo/model.hpp"
#include "geneo/optimizer.hpp"
#include "geneo/parallel.hpp"
#include "geneo/rng.hpp"
#include "geneo/voxelize.hpp"

namespace geneo {

/// A labeled cloud together with its voxelization at a fixed grid shape.
struct Scene {
  std::string name;
  PointCloud cloud;
  Voxelization vox;
  Label target_label = kTowerLabel;
};

inline Scene make_scene(std::string name, PointCloud cloud, Shape3 grid_shape,
                        Label target_label = kTowerLabel) {
  Scene s;
  s.name = std::move(name);
  s.vox = voxelize(cloud, grid_shape, target_label);
  s.cloud = std::move(cloud);
  s.target_label = target_label;
  return s;
}

/// Draws initial parameters for the given operator kinds.
/// Free mixing weights are uniform in [0, 2 / (lambda_range_n - 1)].
inline GeneoLayer init_layer(std::uint64_t seed, std::span<const KernelKind> kinds,
                             Shape3 kernel_shape, std::size_t lambda_range_n) {
  if (kinds.empty()) throw ConfigError("init: at least one operator is required");
  if (!kernel_shape.valid() || kernel_shape.z < 2) throw ConfigError("init: invalid kernel shape");
  Rng rng(seed);
  const double r_hi = static_cast<double>(std::min(kernel_shape.y, kernel_shape.x)) / 2.0;
  const double r_lo = std::min(0.5, r_hi);
  const int h = static_cast<int>(std::clamp<long>(
      std::lround(0.7 * static_cast<double>(kernel_shape.z)), 1, static_cast<long>(kernel_shape.z) - 1));
  GeneoLayer layer;
  layer.kernel_shape = kernel_shape;
  for (KernelKind kind : kinds) {
    switch (kind) {
      case KernelKind::Cylinder: {
        CylinderParams p;
        p.r = rng.uniform(r_lo, r_hi);
        p.sigma = rng.uniform(1.0, 10.0);
        layer.operators.emplace_back(p);
        break;
      }
      case KernelKind::Arrow: {
        ArrowParams p;
        p.r = rng.uniform(r_lo, r_hi);
        p.sigma = rng.uniform(1.0, 10.0);
        p.h = h;
        p.r_c = rng.uniform(r_lo, r_hi);
        p.beta = rng.uniform(0.05, 0.4);
        layer.operators.emplace_back(p);
        break;
      }
      case KernelKind::NegSphere: {
        NegSphereParams p;
        p.r = rng.uniform(r_lo, r_hi);
        p.sigma = rng.uniform(1.0, 10.0);
        p.omega = rng.uniform(0.1, 0.9);
        layer.operators.emplace_back(p);
        break;
      }
    }
  }
  if (kinds.size() > 1) {
    if (lambda_range_n < 2) throw ConfigError("init: lambda range needs N >= 2");
    const double hi = 2.0 / static_cast<double>(lambda_range_n - 1);
    for (std::size_t i = 0; i + 1 < kinds.size(); ++i) layer.free_lambdas.push_back(rng.uniform(0.0, hi));
  }
  return layer;
}

inline GeneoLayer init_layer(std::uint64_t seed, std::span<const KernelKind> kinds, Shape3 kernel_shape) {
  return init_layer(seed, kinds, kernel_shape, kinds.size());
}

inline constexpr std::array<KernelKind, 3> kStandardKinds{KernelKind::Cylinder, KernelKind::Arrow,
                                                          KernelKind::NegSphere};

/// Production-model initialization; `n_operators` sets the lambda range.
inline ModelParams init_params(std::uint64_t seed, std::size_t n_operators, Shape3 kernel_shape) {
  if (n_operators < 2) throw ConfigError("init_params: n_operators must be >= 2");
  return from_layer(init_layer(seed, kStandardKinds, kernel_shape, n_operators));
}

enum class EvalLevel { Voxel, Point };

/// Probabilities and labels of the occupied voxels of every scene, concatenated.
/// Voxel-level scores and metrics only consider occupied voxels: empty space
/// holds no points to segment.
struct ScoredVoxels {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

inline ScoredVoxels occupied_scores(const Model& model, std::span<const Scene> scenes) {
  std::vector<Grid3<double>> probs(scenes.size());
  parallel_for(0, scenes.size(), [&](std::size_t i) { probs[i] = model.forward(scenes[i].vox.grid.values); });
  ScoredVoxels out;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& occ = scenes[s].vox.grid.values;
    for (std::size_t i = 0; i < occ.size(); ++i) {
      if (occ[i] != 0.0) {
        out.scores.push_back(probs[s][i]);
        out.labels.push_back(scenes[s].vox.labels[i]);
      }
    }
  }
  return out;
}

inline Confusion scene_confusion(const Model& model, const Scene& scene, EvalLevel level) {
  const MaskGrid mask = model.predict(scene.vox.grid.values);
  Confusion c;
  if (level == EvalLevel::Voxel) {
    const auto& occ = scene.vox.grid.values;
    for (std::size_t i = 0; i < occ.size(); ++i) {
      if (occ[i] == 0.0) continue;
      const bool p = mask[i] != 0;
      const bool t = scene.vox.labels[i] != 0;
      if (p && t) ++c.tp;
      else if (p) ++c.fp;
      else if (t) ++c.fn;
      else ++c.tn;
    }
    return c;
  }
  const auto pred = devoxelize(mask, scene.vox.map);
  std::vector<std::uint8_t> truth(scene.cloud.size());
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = scene.cloud.labels[i] == scene.target_label;
  return confusion(pred, truth);
}

/// Micro-averaged metrics over all scenes.
inline Metrics evaluate(const Model& model, std::span<const Scene> scenes, EvalLevel level) {
  if (scenes.empty()) throw ConfigError("evaluate: empty dataset");
  std::vector<Confusion> per(scenes.size());
  parallel_for(0, scenes.size(), [&](std::size_t i) { per[i] = scene_confusion(model, scenes[i], level); });
  Confusion total;
  for (const auto& c : per) total += c;
  return metrics_from(total);
}

inline Metrics evaluate(const ModelParams& params, std::span<const Scene> scenes, EvalLevel level) {
  return evaluate(Model(params), scenes, level);
}

inline ThresholdChoice tune_threshold(const Model& model, std::span<const Scene> validation,
                                      ThresholdCriterion criterion = ThresholdCriterion::IoU,
                                      double beta = 1.0) {
  if (validation.empty()) throw ConfigError("tune_threshold: empty validation set");
  const auto sv = occupied_scores(model, validation);
  if (sv.scores.empty()) throw ConfigError("tune_threshold: validation set has no occupied voxels");
  return tune_threshold(sv.scores, sv.labels, criterion, beta);
}

inline double average_precision(const Model& model, std::span<const Scene> scenes) {
  const auto sv = occupied_scores(model, scenes);
  return average_precision(sv.scores, sv.labels);
}

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch = 8;
  double learning_rate = 0.001;
  double decay = 0.9;
  double stabilizer = 1e-8;
  Shape3 kernel_shape{9, 9, 9};
  LossConfig loss;
  ThresholdCriterion criterion = ThresholdCriterion::IoU;
  double criterion_beta = 1.0;

  void validate() const {
    if (batch == 0) throw ConfigError("batch size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (!(decay >= 0.0 && decay < 1.0)) throw ConfigError("decay must lie in [0, 1)");
    if (!kernel_shape.valid() || kernel_shape.z < 2) throw ConfigError("invalid kernel shape");
    loss.validate();
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  Metrics val;
  double tau = 0.0;  ///< validation-tuned threshold used for `val`
  double wall_seconds = 0.0;
};

struct TrainResult {
  GeneoLayer layer;  ///< best-validation-IoU state, tau set to its tuned threshold
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  ///< 0 when no epoch ran
  /// Some trained value ended below -1e-6 (soft constraint not met).
  bool nonnegativity_violated = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

inline bool violates_nonnegativity(const GeneoLayer& layer) {
  for (double v : layer.parameters()) {
    if (v < -kNonNegativeSlack) return true;
  }
  return layer.derived_lambda() < -kNonNegativeSlack;
}

/// Mini-batch RMSProp on the mean per-scene loss plus the negativity penalty.
/// Batches come from a seeded shuffle and gradients are reduced in batch
/// order, so a seed fixes the whole trajectory.
inline TrainResult train_layer(GeneoLayer layer, std::span<const Scene> train_set,
                               std::span<const Scene> val_set, const TrainConfig& cfg,
                               std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw ConfigError("training needs non-empty train and validation splits");
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  result.layer = layer;
  if (cfg.epochs == 0) return result;

  Rng shuffle_rng(mix_seed(seed, 0x5EED));
  RmsProp opt{cfg.learning_rate, cfg.decay, cfg.stabilizer, {}};
  const auto names = layer.parameter_names();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double best_iou = -1.0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch);
      const LayerDifferentiator diff(layer);
      std::vector<SceneGradient> parts(b1 - b0);
      parallel_for(b0, b1, [&](std::size_t i) {
        const Scene& s = train_set[order[i]];
        parts[i - b0] = diff.scene(s.vox.grid.values, s.vox.labels, cfg.loss);
      });
      std::vector<double> grad(layer.parameter_count(), 0.0);
      double data_loss = 0.0;
      for (const auto& p : parts) {
        data_loss += p.loss.data();
        for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += p.data_grad[k];
      }
      const double inv = 1.0 / static_cast<double>(parts.size());
      for (double& g : grad) g *= inv;
      const auto pg = negativity_penalty_gradient(layer, cfg.loss.rho_l, cfg.loss.rho_t);
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += pg[k];
      const double batch_loss = data_loss * inv + parts.front().loss.penalty;
      if (!std::isfinite(batch_loss)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches + 1));
      }
      loss_sum += batch_loss;
      ++batches;

      auto values = layer.parameters();
      opt.step(values, grad, names);
      layer.set_parameters(values);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    const Model model(layer);
    std::vector<double> val_losses(val_set.size());
    parallel_for(0, val_set.size(), [&](std::size_t i) {
      val_losses[i] = loss_terms(model.forward(val_set[i].vox.grid.values), val_set[i].vox.labels,
                                 layer, cfg.loss)
                          .total();
    });
    rec.val_loss = std::accumulate(val_losses.begin(), val_losses.end(), 0.0) /
                   static_cast<double>(val_set.size());
    if (!std::isfinite(rec.val_loss)) {
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    const auto choice = tune_threshold(model, val_set, cfg.criterion, cfg.criterion_beta);
    rec.tau = choice.tau;
    rec.val = metrics_from(choice.counts);
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.val.iou > best_iou) {
      best_iou = rec.val.iou;
      result.layer = layer;
      result.layer.tau = choice.tau;
      result.best_epoch = epoch;
    }
  }
  result.nonnegativity_violated = violates_nonnegativity(result.layer);
  return result;
}

struct ModelTrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  bool nonnegativity_violated = false;
};

/// Trains the production model from init_params(seed, 3, cfg.kernel_shape).
inline ModelTrainResult train(std::span<const Scene> train_set, std::span<const Scene> val_set,
                              const TrainConfig& cfg, std::uint64_t seed,
                              const EpochCallback& on_epoch = {}) {
  const ModelParams init = init_params(seed, 3, cfg.kernel_shape);
  auto r = train_layer(to_layer(init), train_set, val_set, cfg, seed, on_epoch);
  return {from_layer(r.layer), std::move(r.history), r.best_epoch, r.nonnegativity_violated};
}

}  // namespace geneo
