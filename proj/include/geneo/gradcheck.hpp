// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "geneo/backward.hpp"
#include "geneo/dataset.hpp"

namespace geneo {

struct GradCheckOptions {
  std::size_t configurations = 20;
  std::uint64_t seed = 0;
  Shape3 grid_shape{16, 16, 16};
  Shape3 kernel_shape{9, 9, 9};
  double step = 1e-4;
  double rel_tol = 1e-3;
  /// Components whose finite difference is below this are compared absolutely.
  double abs_tol = 1e-7;
  /// When +-step flips the ReLU state of some voxel the difference quotient
  /// straddles a kink; the component is re-checked with step / 10, up to this
  /// many times.
  int kink_retries = 2;
  /// Test hook: scales the analytic gradient of this parameter so the checker
  /// has something to catch.
  std::optional<std::string> corrupt;
};

struct ParamCheck {
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  double error = 0.0;  ///< relative, or absolute for tiny finite differences
  double step = 0.0;   ///< step of the reported difference
  std::size_t kinks = 0;  ///< voxels whose ReLU state flipped at the requested step
  bool absolute = false;
  bool ok = true;
};

struct GradCheckCase {
  std::uint64_t seed = 0;
  bool tversky = false;
  std::vector<ParamCheck> params;

  bool ok() const {
    return std::all_of(params.begin(), params.end(), [](const ParamCheck& p) { return p.ok; });
  }
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;

  bool ok() const {
    return std::all_of(cases.begin(), cases.end(), [](const GradCheckCase& c) { return c.ok(); });
  }
  /// Largest relative error over non-absolute comparisons.
  double worst_relative() const {
    double w = 0.0;
    for (const auto& c : cases)
      for (const auto& p : c.params)
        if (!p.absolute) w = std::max(w, p.error);
    return w;
  }
  /// Components whose requested step straddled a kink.
  std::size_t kinked_components() const {
    std::size_t n = 0;
    for (const auto& c : cases)
      for (const auto& p : c.params) n += p.kinks > 0;
    return n;
  }
  std::vector<std::string> failing_params() const {
    std::vector<std::string> out;
    for (const auto& c : cases)
      for (const auto& p : c.params)
        if (!p.ok && std::find(out.begin(), out.end(), p.name) == out.end()) out.push_back(p.name);
    return out;
  }
};

/// Central differences of the total loss against the analytic gradient.
/// The loss is evaluated exactly as evaluate_total_loss does.
inline GradCheckCase check_gradient(const GeneoLayer& layer, const Grid3<double>& grid,
                                    const VoxelLabelGrid& labels, const LossConfig& loss,
                                    const GradCheckOptions& opt) {
  GradCheckCase out;
  out.tversky = loss.tversky_enabled;
  auto analytic = loss_and_gradient(layer, grid, labels, loss).grad;
  const auto names = layer.parameter_names();
  if (opt.corrupt) {
    const auto it = std::find(names.begin(), names.end(), *opt.corrupt);
    if (it == names.end()) throw ConfigError("gradcheck: unknown parameter '" + *opt.corrupt + "'");
    double& g = analytic[static_cast<std::size_t>(it - names.begin())];
    g = 1.5 * g + 1e-3;
  }
  const auto values = layer.parameters();
  for (std::size_t k = 0; k < values.size(); ++k) {
    ParamCheck p;
    p.name = names[k];
    p.analytic = analytic[k];
    double step = opt.step;
    for (int attempt = 0;; ++attempt) {
      auto plus = values, minus = values;
      plus[k] += step;
      minus[k] -= step;
      GeneoLayer lp = layer, lm = layer;
      lp.set_parameters(plus);
      lm.set_parameters(minus);
      const Model mp(lp), mm(lm);
      const auto rp = mp.observer(grid), rm = mm.observer(grid);
      std::size_t flips = 0;
      for (std::size_t i = 0; i < rp.size(); ++i) flips += (rp[i] > 0.0) != (rm[i] > 0.0);
      if (attempt == 0) p.kinks = flips;
      const double lplus = loss_terms(Model::probability(rp), labels, lp, loss).total();
      const double lminus = loss_terms(Model::probability(rm), labels, lm, loss).total();
      p.numeric = (lplus - lminus) / (2.0 * step);
      p.step = step;
      if (flips == 0 || attempt >= opt.kink_retries) break;
      step /= 10.0;
    }
    const double diff = std::abs(p.numeric - p.analytic);
    if (std::abs(p.numeric) < opt.abs_tol) {
      p.absolute = true;
      p.error = diff;
      p.ok = diff <= opt.abs_tol;
    } else {
      p.error = diff / std::max(std::abs(p.numeric), std::abs(p.analytic));
      p.ok = p.error <= opt.rel_tol;
    }
    out.params.push_back(p);
  }
  return out;
}

/// Checks `configurations` random parameter draws, each on its own synthetic
/// crop voxelized at `grid_shape`. Odd configurations enable the Tversky term.
inline GradCheckReport run_gradcheck(const GradCheckOptions& opt) {
  GradCheckReport report;
  for (std::size_t i = 0; i < opt.configurations; ++i) {
    const std::uint64_t seed = opt.seed + i;
    const TowerCrop crop = make_tower_crop(scene_config_for(SceneConfig{}, seed));
    const Voxelization vox = voxelize(crop.cloud, opt.grid_shape, kTowerLabel);
    ModelParams p = init_params(seed, 3, opt.kernel_shape);
    Rng rng(mix_seed(seed, 0x6C));
    const double a = rng.uniform(), b = rng.uniform();
    p.lambda_cy = std::min(a, b);
    p.lambda_ar = std::max(a, b) - p.lambda_cy;
    LossConfig loss;
    loss.tversky_enabled = i % 2 == 1;
    auto c = check_gradient(to_layer(p), vox.grid.values, vox.labels, loss, opt);
    c.seed = seed;
    report.cases.push_back(std::move(c));
  }
  return report;
}

}  // namespace geneo
