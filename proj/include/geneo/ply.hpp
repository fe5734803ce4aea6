// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <span>
#include <string>

#include "geneo/pointcloud.hpp"

namespace geneo {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kTruePositiveColor{0, 200, 0};
inline constexpr Rgb kFalsePositiveColor{220, 0, 0};
inline constexpr Rgb kFalseNegativeColor{240, 160, 0};
inline constexpr Rgb kTrueNegativeColor{150, 150, 150};

inline Rgb outcome_color(bool predicted, bool truth) {
  if (predicted) return truth ? kTruePositiveColor : kFalsePositiveColor;
  return truth ? kFalseNegativeColor : kTrueNegativeColor;
}

/// Writes an ASCII PLY whose vertex colors encode TP/FP/FN/TN per point.
inline void save_colored_cloud(const PointCloud& cloud, std::span<const std::uint8_t> predictions,
                               std::span<const std::uint8_t> truth,
                               const std::filesystem::path& path) {
  if (predictions.size() != cloud.size() || truth.size() != cloud.size()) {
    throw ShapeError("colored export: predictions/truth length must equal the point count");
  }
  std::string out;
  out.reserve(256 + cloud.size() * 48);
  out += "ply\nformat ascii 1.0\ncomment colors TP=0,200,0 FP=220,0,0 FN=240,160,0 TN=150,150,150\n";
  out += "element vertex " + std::to_string(cloud.size()) + "\n";
  out +=
      "property float x\nproperty float y\nproperty float z\n"
      "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  char buf[160];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    const Rgb c = outcome_color(predictions[i] != 0, truth[i] != 0);
    const int n = std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %u %u %u\n", p[0], p[1], p[2],
                                unsigned{c[0]}, unsigned{c[1]}, unsigned{c[2]});
    out.append(buf, static_cast<std::size_t>(n));
  }
  detail::write_file(path, out);
}

}  // namespace geneo
