// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "geneo/grid.hpp"
#include "geneo/pointcloud.hpp"

namespace geneo {

/// Occupancy (or any real field) on a regular grid anchored in world space.
/// origin and voxel_size are indexed (z, y, x) like the grid axes.
struct VoxelGrid {
  Grid3<double> values;
  std::array<double, 3> origin{};
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};

  const Shape3& shape() const { return values.shape(); }
};

/// Per-voxel binary ground truth: 1 where any contained point carries the target label.
using VoxelLabelGrid = Grid3<std::uint8_t>;
/// Thresholded prediction.
using MaskGrid = Grid3<std::uint8_t>;

/// Point-to-voxel association in both directions (CSR layout for voxel -> points).
class VoxelPointMap {
 public:
  VoxelPointMap() = default;
  VoxelPointMap(Shape3 shape, std::vector<std::size_t> point_voxel) : shape_(shape) {
    point_voxel_ = std::move(point_voxel);
    offsets_.assign(shape.volume() + 1, 0);
    for (std::size_t v : point_voxel_) ++offsets_[v + 1];
    for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
    points_.resize(point_voxel_.size());
    std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t p = 0; p < point_voxel_.size(); ++p) points_[cursor[point_voxel_[p]]++] = p;
  }

  const Shape3& shape() const { return shape_; }
  std::size_t point_count() const { return point_voxel_.size(); }
  std::size_t voxel_of(std::size_t point) const { return point_voxel_[point]; }
  std::span<const std::size_t> point_voxels() const { return point_voxel_; }

  std::span<const std::size_t> points_in(std::size_t voxel) const {
    return std::span<const std::size_t>(points_).subspan(offsets_[voxel],
                                                         offsets_[voxel + 1] - offsets_[voxel]);
  }

 private:
  Shape3 shape_{};
  std::vector<std::size_t> point_voxel_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> points_;
};

struct Voxelization {
  VoxelGrid grid;
  VoxelLabelGrid labels;
  VoxelPointMap map;
};

/// Grid geometry for a cloud: its bounding box padded by half a voxel per side,
/// so the extreme points land on voxel centers. A flat axis borrows the
/// largest voxel edge of the other axes (1 m if every axis is flat).
inline VoxelGrid grid_geometry(const PointCloud& cloud, Shape3 shape) {
  if (cloud.empty()) throw ShapeError("cannot voxelize an empty point cloud");
  if (!shape.valid()) throw ShapeError("grid shape must be at least 1 on every axis");
  std::array<double, 3> lo{}, hi{};
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  for (const auto& p : cloud.points) {
    // (x, y, z) point -> (z, y, x) axis
    for (std::size_t a = 0; a < 3; ++a) {
      const double c = p[2 - a];
      lo[a] = std::min(lo[a], c);
      hi[a] = std::max(hi[a], c);
    }
  }
  VoxelGrid g;
  g.values = Grid3<double>(shape, 0.0);
  std::array<bool, 3> flat{};
  double largest = 0.0;
  for (std::size_t a = 0; a < 3; ++a) {
    const double extent = hi[a] - lo[a];
    flat[a] = !(extent > 0.0);
    if (!flat[a]) {
      const std::size_t n = shape[a];
      g.voxel_size[a] = n > 1 ? extent / static_cast<double>(n - 1) : extent;
      largest = std::max(largest, g.voxel_size[a]);
    }
  }
  for (std::size_t a = 0; a < 3; ++a) {
    if (flat[a]) g.voxel_size[a] = largest > 0.0 ? largest : 1.0;
    g.origin[a] = lo[a] - 0.5 * g.voxel_size[a];
  }
  return g;
}

/// Voxel index (z, y, x) of a world point, clamped into the grid.
inline std::array<std::size_t, 3> voxel_coords(const VoxelGrid& g, const Point3f& p) {
  std::array<std::size_t, 3> idx{};
  for (std::size_t a = 0; a < 3; ++a) {
    const double t = (static_cast<double>(p[2 - a]) - g.origin[a]) / g.voxel_size[a];
    const double n = static_cast<double>(g.shape()[a]);
    const double f = std::clamp(std::floor(t), 0.0, n - 1.0);
    idx[a] = static_cast<std::size_t>(f);
  }
  return idx;
}

/// Occupancy measurement of a cloud: value 1 wherever at least one point falls.
inline Voxelization voxelize(const PointCloud& cloud, Shape3 shape, Label target_label) {
  cloud.validate();
  Voxelization out;
  out.grid = grid_geometry(cloud, shape);
  out.labels = VoxelLabelGrid(shape, 0);
  std::vector<std::size_t> point_voxel(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto c = voxel_coords(out.grid, cloud.points[i]);
    const std::size_t v = out.grid.values.index(c[0], c[1], c[2]);
    point_voxel[i] = v;
    out.grid.values[v] = 1.0;
    if (cloud.labels[i] == target_label) out.labels[v] = 1;
  }
  out.map = VoxelPointMap(shape, std::move(point_voxel));
  return out;
}

/// Each point inherits the prediction of its voxel.
inline std::vector<std::uint8_t> devoxelize(const MaskGrid& mask, const VoxelPointMap& map) {
  if (!(mask.shape() == map.shape())) {
    throw ShapeError("devoxelize: mask " + mask.shape().str() + " does not match map " +
                     map.shape().str());
  }
  std::vector<std::uint8_t> out(map.point_count());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = mask[map.voxel_of(p)] ? 1 : 0;
  return out;
}

}  // namespace geneo
