// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "geneo/training.hpp"

namespace geneo {

/// How many operators of each kind a layer holds.
struct OperatorCounts {
  std::size_t cylinder = 0;
  std::size_t arrow = 0;
  std::size_t negsphere = 0;

  std::size_t total() const { return cylinder + arrow + negsphere; }
  bool operator==(const OperatorCounts&) const = default;
};

struct AblationRow {
  char id;
  OperatorCounts counts;
};

inline constexpr std::array<AblationRow, 7> kAblationRows{{
    {'A', {1, 0, 0}},
    {'B', {0, 1, 0}},
    {'C', {1, 0, 1}},
    {'D', {0, 1, 1}},
    {'E', {1, 1, 1}},
    {'F', {2, 2, 2}},
    {'G', {3, 3, 3}},
}};

/// Cylinders first, then arrows, then negative spheres.
inline std::vector<KernelKind> operator_kinds(const OperatorCounts& c) {
  std::vector<KernelKind> kinds;
  kinds.insert(kinds.end(), c.cylinder, KernelKind::Cylinder);
  kinds.insert(kinds.end(), c.arrow, KernelKind::Arrow);
  kinds.insert(kinds.end(), c.negsphere, KernelKind::NegSphere);
  return kinds;
}

inline std::string counts_label(const OperatorCounts& c) {
  return "cy=" + std::to_string(c.cylinder) + " ar=" + std::to_string(c.arrow) +
         " ns=" + std::to_string(c.negsphere);
}

struct AblationResult {
  AblationRow row;
  Metrics val;       ///< at the validation-tuned threshold
  double tau = 0.0;
  std::size_t parameters = 0;
  std::size_t best_epoch = 0;
};

using AblationCallback = std::function<void(const AblationResult&)>;

/// Trains one layer per row with the same seed, data and protocol.
inline std::vector<AblationResult> run_ablation(std::span<const Scene> train_set,
                                                std::span<const Scene> val_set,
                                                const TrainConfig& cfg, std::uint64_t seed,
                                                const AblationCallback& on_row = {}) {
  if (train_set.empty() || val_set.empty()) throw ConfigError("ablation needs non-empty train and validation splits");
  std::vector<AblationResult> out;
  for (const auto& row : kAblationRows) {
    const auto kinds = operator_kinds(row.counts);
    const GeneoLayer init = init_layer(seed, kinds, cfg.kernel_shape);
    TrainResult tr = train_layer(init, train_set, val_set, cfg, seed);
    const Metrics val = evaluate(Model(tr.layer), val_set, EvalLevel::Voxel);
    AblationResult r{row, val, tr.layer.tau, tr.layer.parameter_count(), tr.best_epoch};
    if (on_row) on_row(r);
    out.push_back(r);
  }
  return out;
}

/// Index of the row with the highest validation IoU (first on ties).
inline std::size_t best_row(std::span<const AblationResult> rows) {
  if (rows.empty()) throw ConfigError("empty ablation table");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].val.iou > rows[best].val.iou) best = i;
  }
  return best;
}

}  // namespace geneo
