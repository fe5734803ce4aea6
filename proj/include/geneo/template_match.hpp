// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "geneo/conv.hpp"
#include "geneo/error.hpp"
#include "geneo/metrics.hpp"
#include "geneo/training.hpp"

namespace geneo {

/// Strict (unsmoothed) cylinder shell template.
struct TemplateConfig {
  double radius = 2.0;  ///< voxels
  Shape3 shape{9, 7, 7};
};

/// Depth `depth`, footprint wide enough for the shell plus one voxel of margin.
inline TemplateConfig make_template_config(double radius_voxels, std::size_t depth = 9) {
  if (!(radius_voxels > 0.0)) throw ConfigError("template radius must be positive");
  const auto side = static_cast<std::size_t>(2 * std::ceil(radius_voxels) + 3);
  return {radius_voxels, {depth, side, side}};
}

/// Voxels whose horizontal distance to the axis rounds to the radius are 1,
/// the rest 0; then zero-mean and unit L2 norm.
inline Grid3<double> cylinder_template(const TemplateConfig& cfg) {
  if (!(cfg.radius > 0.0)) throw ConfigError("template radius must be positive");
  if (!cfg.shape.valid()) throw ShapeError("template shape must be positive");
  Grid3<double> t(cfg.shape, 0.0);
  const double cy = (static_cast<double>(cfg.shape.y) - 1.0) / 2.0;
  const double cx = (static_cast<double>(cfg.shape.x) - 1.0) / 2.0;
  std::size_t on = 0;
  for (std::size_t z = 0; z < cfg.shape.z; ++z) {
    for (std::size_t y = 0; y < cfg.shape.y; ++y) {
      for (std::size_t x = 0; x < cfg.shape.x; ++x) {
        const double d = std::hypot(static_cast<double>(y) - cy, static_cast<double>(x) - cx);
        if (std::abs(d - cfg.radius) <= 0.5) {
          t(z, y, x) = 1.0;
          ++on;
        }
      }
    }
  }
  if (on == 0 || on == t.size()) throw ConfigError("template shell is empty or fills the template");
  const double mean = static_cast<double>(on) / static_cast<double>(t.size());
  double norm = 0.0;
  for (double& v : t.storage()) {
    v -= mean;
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : t.storage()) v /= norm;
  return t;
}

/// Correlation score per voxel.
inline Grid3<double> template_scores(const Grid3<double>& grid, const TemplateConfig& cfg) {
  return conv3d(grid, cylinder_template(cfg));
}

struct TemplateMatchResult {
  double average_precision = 0.0;
  std::size_t voxels = 0;  ///< occupied voxels ranked
};

/// Ranks the occupied voxels of every scene by template score.
inline TemplateMatchResult template_match(std::span<const Scene> scenes, const TemplateConfig& cfg) {
  const Grid3<double> tmpl = cylinder_template(cfg);
  std::vector<Grid3<double>> scores(scenes.size());
  parallel_for(0, scenes.size(), [&](std::size_t i) { scores[i] = conv3d(scenes[i].vox.grid.values, tmpl); });
  std::vector<double> s;
  std::vector<std::uint8_t> l;
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    const auto& occ = scenes[k].vox.grid.values;
    for (std::size_t i = 0; i < occ.size(); ++i) {
      if (occ[i] == 0.0) continue;
      s.push_back(scores[k][i]);
      l.push_back(scenes[k].vox.labels[i]);
    }
  }
  return {average_precision(s, l), s.size()};
}

/// Template radius in voxels from a metric radius and the scenes' horizontal voxel edge.
inline double radius_in_voxels(double radius_m, std::span<const Scene> scenes) {
  if (scenes.empty()) throw ConfigError("no scenes to measure voxel size on");
  double s = 0.0;
  for (const auto& sc : scenes) s += 0.5 * (sc.vox.grid.voxel_size[1] + sc.vox.grid.voxel_size[2]);
  return radius_m / (s / static_cast<double>(scenes.size()));
}

}  // namespace geneo
