// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "geneo/error.hpp"
#include "geneo/pointcloud.hpp"
#include "geneo/rng.hpp"

namespace geneo {

/// Rural corridor scene: rough ground, lattice towers joined by sagging
/// power lines, and tree-like vegetation blobs. Lengths in meters,
/// densities in points per square meter (per meter for wires).
struct SceneConfig {
  double extent_x = 120.0;
  double extent_y = 120.0;
  double ground_roughness = 0.4;
  double ground_density = 3.0;
  std::size_t tower_count = 2;
  double tower_height_min = 20.0;
  double tower_height_max = 35.0;
  double tower_radius = 1.6;  ///< upper bound of a tower's horizontal spread
  double tower_taper = 0.4;   ///< top radius as a fraction of the base radius, in (0, 1]
  double tower_density = 10.0;
  /// When > 0, tower point counts are scaled so towers make up this share of the scene.
  double tower_fraction = 0.0;
  double tower_spacing_min = 45.0;
  double tower_spacing_max = 60.0;
  double line_sag = 3.0;
  double line_attach_fraction = 0.9;
  double line_density = 4.0;
  std::size_t vegetation_count = 30;
  double vegetation_radius_min = 1.5;
  double vegetation_radius_max = 4.0;
  double vegetation_density = 6.0;
  double noise_radius = 2.0;  ///< label dilation radius
  double noise_rate = 0.0;    ///< share of eligible points relabeled as tower
  std::uint64_t seed = 0;

  void validate() const {
    const auto bad = [](const std::string& what) { throw ConfigError("scene config: " + what); };
    if (!(extent_x > 0.0) || !(extent_y > 0.0)) bad("extent must have positive area");
    if (!(ground_roughness >= 0.0)) bad("ground_roughness must be >= 0");
    if (!(ground_density > 0.0)) bad("ground_density must be > 0");
    if (!(tower_height_min > 0.0) || tower_height_max < tower_height_min) bad("invalid tower height range");
    if (!(tower_radius > 0.0)) bad("tower_radius must be > 0");
    if (!(tower_taper > 0.0 && tower_taper <= 1.0)) bad("tower_taper must lie in (0, 1]");
    if (!(tower_density > 0.0)) bad("tower_density must be > 0");
    if (!(tower_fraction >= 0.0 && tower_fraction < 1.0)) bad("tower_fraction must lie in [0, 1)");
    if (!(tower_spacing_min > 0.0) || tower_spacing_max < tower_spacing_min) bad("invalid tower spacing range");
    if (!(line_sag >= 0.0)) bad("line_sag must be >= 0");
    if (!(line_attach_fraction > 0.0 && line_attach_fraction <= 1.0)) bad("line_attach_fraction must lie in (0, 1]");
    if (!(line_density > 0.0)) bad("line_density must be > 0");
    if (!(vegetation_radius_min > 0.0) || vegetation_radius_max < vegetation_radius_min) bad("invalid vegetation radius range");
    if (!(vegetation_density > 0.0)) bad("vegetation_density must be > 0");
    if (!(noise_radius > 0.0)) bad("noise_radius must be > 0");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) bad("noise_rate must lie in [0, 1]");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SceneConfig, extent_x, extent_y, ground_roughness,
                                                ground_density, tower_count, tower_height_min,
                                                tower_height_max, tower_radius, tower_taper, tower_density,
                                                tower_fraction, tower_spacing_min, tower_spacing_max,
                                                line_sag, line_attach_fraction, line_density,
                                                vegetation_count, vegetation_radius_min,
                                                vegetation_radius_max, vegetation_density,
                                                noise_radius, noise_rate, seed)

struct TowerInfo {
  double x = 0.0;
  double y = 0.0;
  double base_z = 0.0;
  double height = 0.0;
  double radius = 0.0;  ///< at the base
  double top_radius = 0.0;

  double radius_at(double z) const {
    const double t = std::clamp((z - base_z) / height, 0.0, 1.0);
    return radius + t * (top_radius - radius);
  }
  double mean_radius() const { return 0.5 * (radius + top_radius); }
};

/// A generated cloud plus the tower geometry it was built from.
struct SyntheticScene {
  PointCloud cloud;
  std::vector<TowerInfo> towers;  ///< towers[0] sits at the scene center
};

namespace detail {

struct GroundSurface {
  double amp = 0.0;
  std::array<double, 3> freq{};
  std::array<double, 3> phase{};
  double angle = 0.0;

  double operator()(double x, double y) const {
    const double along = x * std::cos(angle) + y * std::sin(angle);
    return amp * (0.6 * std::sin(freq[0] * x + phase[0]) * std::sin(freq[1] * y + phase[1]) +
                  0.4 * std::sin(freq[2] * along + phase[2]));
  }
};

struct Segment {
  std::array<double, 3> a;
  std::array<double, 3> b;
  double length() const {
    return std::hypot(b[0] - a[0], b[1] - a[1], b[2] - a[2]);
  }
};

/// Members of a tapered four-legged lattice: legs, horizontal rings and X bracing.
inline std::vector<Segment> lattice_members(const TowerInfo& t, double phase) {
  const auto corner = [&](int k, double z) {
    const double ang = phase + k * std::numbers::pi / 2.0;
    const double r = t.radius_at(z);
    return std::array<double, 3>{t.x + r * std::cos(ang), t.y + r * std::sin(ang), z};
  };
  std::vector<Segment> out;
  const double panel = 3.0;
  const auto panels = static_cast<int>(std::max(1.0, std::round(t.height / panel)));
  const double step = t.height / panels;
  for (int p = 0; p <= panels; ++p) {
    const double z = t.base_z + p * step;
    for (int k = 0; k < 4; ++k) {
      out.push_back({corner(k, z), corner((k + 1) % 4, z)});
      if (p < panels) {
        out.push_back({corner(k, z), corner(k, z + step)});
        out.push_back({corner(k, z), corner((k + 1) % 4, z + step)});
        out.push_back({corner((k + 1) % 4, z), corner(k, z + step)});
      }
    }
  }
  return out;
}

inline void sample_segments(const std::vector<Segment>& members, std::size_t n, Label label,
                            Rng& rng, PointCloud& cloud) {
  double total = 0.0;
  for (const auto& m : members) total += m.length();
  if (total <= 0.0 || n == 0) return;
  for (std::size_t i = 0; i < n; ++i) {
    // pick a member proportionally to length
    double u = rng.uniform() * total;
    std::size_t k = 0;
    while (k + 1 < members.size() && u > members[k].length()) {
      u -= members[k].length();
      ++k;
    }
    const auto& m = members[k];
    const double t = rng.uniform();
    cloud.push_back({static_cast<float>(m.a[0] + t * (m.b[0] - m.a[0])),
                     static_cast<float>(m.a[1] + t * (m.b[1] - m.a[1])),
                     static_cast<float>(m.a[2] + t * (m.b[2] - m.a[2]))},
                    label);
  }
}

/// Parabolic sag between two attachment points.
inline void sample_wire(const std::array<double, 3>& a, const std::array<double, 3>& b, double sag,
                        double density, Rng& rng, PointCloud& cloud) {
  const double span = std::hypot(b[0] - a[0], b[1] - a[1]);
  const auto n = static_cast<std::size_t>(std::ceil(span * density));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = rng.uniform();
    const double z = a[2] + t * (b[2] - a[2]) - 4.0 * sag * t * (1.0 - t);
    cloud.push_back({static_cast<float>(a[0] + t * (b[0] - a[0])),
                     static_cast<float>(a[1] + t * (b[1] - a[1])), static_cast<float>(z)},
                    kPowerLineLabel);
  }
}

/// Distance along direction (dx, dy) from (x, y) to the rectangle border.
inline double distance_to_border(double x, double y, double dx, double dy, double ex, double ey) {
  double t = 1e300;
  if (dx > 0) t = std::min(t, (ex - x) / dx);
  if (dx < 0) t = std::min(t, -x / dx);
  if (dy > 0) t = std::min(t, (ey - y) / dy);
  if (dy < 0) t = std::min(t, -y / dy);
  return std::max(0.0, t);
}

}  // namespace detail

/// Deterministic in `cfg` (seed included).
inline SyntheticScene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.seed, 0x5CE7E));
  SyntheticScene scene;
  PointCloud& cloud = scene.cloud;

  detail::GroundSurface ground;
  ground.amp = cfg.ground_roughness;
  for (auto& f : ground.freq) f = rng.uniform(0.04, 0.2);
  for (auto& p : ground.phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
  ground.angle = rng.uniform(0.0, std::numbers::pi);

  // Tower layout along a random corridor direction through the center.
  const double dir = rng.uniform(0.0, std::numbers::pi);
  const double dx = std::cos(dir), dy = std::sin(dir);
  const double cx = cfg.extent_x / 2.0, cy = cfg.extent_y / 2.0;
  std::vector<double> offsets;  // signed distance along the corridor
  double pos_edge = 0.0, neg_edge = 0.0;
  for (std::size_t i = 0; i < cfg.tower_count; ++i) {
    double off = 0.0;
    if (i > 0) {
      const double gap = rng.uniform(cfg.tower_spacing_min, cfg.tower_spacing_max);
      if (i % 2 == 1) off = (pos_edge += gap);
      else off = (neg_edge -= gap);
    }
    const double x = cx + off * dx, y = cy + off * dy;
    TowerInfo t;
    t.height = rng.uniform(cfg.tower_height_min, cfg.tower_height_max);
    t.radius = cfg.tower_radius * rng.uniform(0.75, 1.0);
    t.top_radius = t.radius * cfg.tower_taper;
    if (x < 0.0 || x > cfg.extent_x || y < 0.0 || y > cfg.extent_y) continue;
    t.x = x;
    t.y = y;
    t.base_z = ground(x, y);
    scene.towers.push_back(t);
    offsets.push_back(off);
  }

  // Ground.
  const auto n_ground = static_cast<std::size_t>(cfg.ground_density * cfg.extent_x * cfg.extent_y);
  cloud.reserve(n_ground * 2);
  for (std::size_t i = 0; i < n_ground; ++i) {
    const double x = rng.uniform(0.0, cfg.extent_x), y = rng.uniform(0.0, cfg.extent_y);
    cloud.push_back({static_cast<float>(x), static_cast<float>(y),
                     static_cast<float>(ground(x, y) + rng.normal(0.0, 0.03))},
                    kGroundLabel);
  }

  // Vegetation: canopy shell on a short trunk, kept clear of the towers.
  for (std::size_t i = 0; i < cfg.vegetation_count; ++i) {
    const double r = rng.uniform(cfg.vegetation_radius_min, cfg.vegetation_radius_max);
    double x = 0.0, y = 0.0;
    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      x = rng.uniform(0.0, cfg.extent_x);
      y = rng.uniform(0.0, cfg.extent_y);
      placed = true;
      for (const auto& t : scene.towers) {
        if (std::hypot(x - t.x, y - t.y) < t.radius + r + 2.0) placed = false;
      }
    }
    if (!placed) continue;
    const double trunk = rng.uniform(0.5, 3.0);
    const double gz = ground(x, y);
    const double cz = gz + trunk + r;
    const auto n = static_cast<std::size_t>(cfg.vegetation_density * 4.0 * std::numbers::pi * r * r);
    for (std::size_t k = 0; k < n; ++k) {
      const double u = rng.uniform(-1.0, 1.0);
      const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double s = std::sqrt(1.0 - u * u);
      const double rr = r * rng.uniform(0.85, 1.0);
      cloud.push_back({static_cast<float>(x + rr * s * std::cos(phi)),
                       static_cast<float>(y + rr * s * std::sin(phi)), static_cast<float>(cz + rr * u)},
                      kVegetationLabel);
    }
    const auto n_trunk = static_cast<std::size_t>(std::ceil(trunk * cfg.line_density));
    for (std::size_t k = 0; k < n_trunk; ++k) {
      cloud.push_back({static_cast<float>(x), static_cast<float>(y),
                       static_cast<float>(gz + rng.uniform(0.0, trunk))},
                      kVegetationLabel);
    }
  }

  // Power lines: two phase wires beside the tower and a shield wire on top,
  // between neighbouring towers and from the outermost towers to the border.
  std::vector<std::size_t> by_offset(scene.towers.size());
  for (std::size_t i = 0; i < by_offset.size(); ++i) by_offset[i] = i;
  std::sort(by_offset.begin(), by_offset.end(),
            [&](std::size_t a, std::size_t b) { return offsets[a] < offsets[b]; });
  const double px = -dy, py = dx;  // perpendicular
  const auto attachments = [&](const TowerInfo& t) {
    const double z = t.base_z + cfg.line_attach_fraction * t.height;
    const double arm = t.radius_at(z) + 1.0;
    return std::array<std::array<double, 3>, 3>{
        std::array<double, 3>{t.x + arm * px, t.y + arm * py, z},
        std::array<double, 3>{t.x - arm * px, t.y - arm * py, z},
        std::array<double, 3>{t.x, t.y, t.base_z + t.height}};
  };
  for (std::size_t k = 0; k + 1 < by_offset.size(); ++k) {
    const auto a = attachments(scene.towers[by_offset[k]]);
    const auto b = attachments(scene.towers[by_offset[k + 1]]);
    for (std::size_t w = 0; w < 3; ++w) detail::sample_wire(a[w], b[w], cfg.line_sag, cfg.line_density, rng, cloud);
  }
  if (!by_offset.empty()) {
    for (int side : {-1, 1}) {
      const TowerInfo& t = scene.towers[side < 0 ? by_offset.front() : by_offset.back()];
      const double sx = side * dx, sy = side * dy;
      const double reach = detail::distance_to_border(t.x, t.y, sx, sy, cfg.extent_x, cfg.extent_y);
      if (reach <= 0.0) continue;
      for (const auto& a : attachments(t)) {
        std::array<double, 3> b{a[0] + reach * sx, a[1] + reach * sy, a[2]};
        b[0] = std::clamp(b[0], 0.0, cfg.extent_x);
        b[1] = std::clamp(b[1], 0.0, cfg.extent_y);
        detail::sample_wire(a, b, cfg.line_sag, cfg.line_density, rng, cloud);
      }
    }
  }

  // Towers last, so a requested tower share can be computed from the rest.
  std::vector<double> areas;
  double area_sum = 0.0;
  for (const auto& t : scene.towers) {
    areas.push_back(2.0 * std::numbers::pi * t.mean_radius() * t.height);
    area_sum += areas.back();
  }
  const double others = static_cast<double>(cloud.size());
  for (std::size_t i = 0; i < scene.towers.size(); ++i) {
    const TowerInfo& t = scene.towers[i];
    std::size_t n = 0;
    if (cfg.tower_fraction > 0.0) {
      const double total_tower = cfg.tower_fraction / (1.0 - cfg.tower_fraction) * others;
      n = static_cast<std::size_t>(std::llround(total_tower * areas[i] / area_sum));
    } else {
      n = static_cast<std::size_t>(std::llround(cfg.tower_density * areas[i]));
    }
    const double phase = rng.uniform(0.0, std::numbers::pi / 2.0);
    detail::sample_segments(detail::lattice_members(t, phase), n, kTowerLabel, rng, cloud);
  }
  return scene;
}

/// Relabels as tower exactly round(rate * E) of the E non-tower points lying
/// within `noise_radius` of some tower point, chosen by a seeded shuffle.
inline PointCloud inject_label_noise(const PointCloud& cloud, const SceneConfig& cfg,
                                     Label tower_label = kTowerLabel) {
  if (!(cfg.noise_rate >= 0.0 && cfg.noise_rate <= 1.0)) throw ConfigError("noise rate must lie in [0, 1]");
  if (!(cfg.noise_radius > 0.0)) throw ConfigError("noise radius must be positive");
  PointCloud out = cloud;
  if (cfg.noise_rate == 0.0) return out;

  const double cell = cfg.noise_radius;
  const auto key = [&](long i, long j, long k) {
    return (static_cast<std::uint64_t>(i & 0x1FFFFF) << 42) |
           (static_cast<std::uint64_t>(j & 0x1FFFFF) << 21) | static_cast<std::uint64_t>(k & 0x1FFFFF);
  };
  const auto cell_of = [&](const Point3f& p) {
    return std::array<long, 3>{static_cast<long>(std::floor(p[0] / cell)),
                               static_cast<long>(std::floor(p[1] / cell)),
                               static_cast<long>(std::floor(p[2] / cell))};
  };
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> towers;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.labels[i] != tower_label) continue;
    const auto c = cell_of(cloud.points[i]);
    towers[key(c[0], c[1], c[2])].push_back(i);
  }
  const double r2 = cfg.noise_radius * cfg.noise_radius;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.labels[i] == tower_label) continue;
    const auto& p = cloud.points[i];
    const auto c = cell_of(p);
    bool near = false;
    for (long a = -1; a <= 1 && !near; ++a) {
      for (long b = -1; b <= 1 && !near; ++b) {
        for (long d = -1; d <= 1 && !near; ++d) {
          const auto it = towers.find(key(c[0] + a, c[1] + b, c[2] + d));
          if (it == towers.end()) continue;
          for (std::size_t t : it->second) {
            const auto& q = cloud.points[t];
            const double ex = static_cast<double>(p[0]) - q[0];
            const double ey = static_cast<double>(p[1]) - q[1];
            const double ez = static_cast<double>(p[2]) - q[2];
            if (ex * ex + ey * ey + ez * ez <= r2) {
              near = true;
              break;
            }
          }
        }
      }
    }
    if (near) eligible.push_back(i);
  }
  const auto k = static_cast<std::size_t>(
      std::llround(cfg.noise_rate * static_cast<double>(eligible.size())));
  Rng rng(mix_seed(cfg.seed, 0x401CE));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
    out.labels[eligible[i]] = tower_label;
  }
  return out;
}

inline std::size_t count_label(const PointCloud& cloud, Label label) {
  return static_cast<std::size_t>(std::count(cloud.labels.begin(), cloud.labels.end(), label));
}

}  // namespace geneo
