// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "geneo/error.hpp"
#include "geneo/grid.hpp"
#include "geneo/pointcloud.hpp"

namespace geneo {

enum class KernelKind { Cylinder, Arrow, NegSphere };

inline std::string_view kind_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::Cylinder:
      return "cylinder";
    case KernelKind::Arrow:
      return "arrow";
    case KernelKind::NegSphere:
      return "negsphere";
  }
  return "?";
}

/// Kernel-local position, in voxels. z is the vertical axis.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Smoothed vertical cylinder of radius r.
struct CylinderParams {
  double r = 1.0;
  double sigma = 1.0;
};

/// Cylinder below slice h, second ring of radius r_c * tan(beta * pi) from h up.
/// h is a fixed slice index; the other four values are trainable.
struct ArrowParams {
  double r = 1.0;
  double sigma = 1.0;
  int h = 6;
  double r_c = 1.0;
  double beta = 0.25;
};

/// Spherical shell of radius r shifted down by omega.
struct NegSphereParams {
  double r = 1.0;
  double sigma = 1.0;
  double omega = 0.5;
};

using ShapeParams = std::variant<CylinderParams, ArrowParams, NegSphereParams>;

inline KernelKind kind_of(const ShapeParams& p) { return static_cast<KernelKind>(p.index()); }

inline std::span<const std::string_view> trainable_names(KernelKind kind) {
  static constexpr std::array<std::string_view, 2> cy{"r", "sigma"};
  static constexpr std::array<std::string_view, 4> ar{"r", "sigma", "r_c", "beta"};
  static constexpr std::array<std::string_view, 3> ns{"r", "sigma", "omega"};
  switch (kind) {
    case KernelKind::Cylinder:
      return cy;
    case KernelKind::Arrow:
      return ar;
    case KernelKind::NegSphere:
      return ns;
  }
  return {};
}

inline std::size_t trainable_count(KernelKind kind) { return trainable_names(kind).size(); }

inline std::vector<double> trainable_values(const ShapeParams& params) {
  return std::visit(
      [](const auto& p) -> std::vector<double> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, CylinderParams>) return {p.r, p.sigma};
        if constexpr (std::is_same_v<P, ArrowParams>) return {p.r, p.sigma, p.r_c, p.beta};
        if constexpr (std::is_same_v<P, NegSphereParams>) return {p.r, p.sigma, p.omega};
      },
      params);
}

inline ShapeParams with_trainable_values(ShapeParams params, std::span<const double> v) {
  if (v.size() != trainable_count(kind_of(params))) {
    throw ShapeError("wrong number of trainable values for " +
                     std::string(kind_name(kind_of(params))));
  }
  std::visit(
      [&](auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, CylinderParams>) {
          p.r = v[0];
          p.sigma = v[1];
        } else if constexpr (std::is_same_v<P, ArrowParams>) {
          p.r = v[0];
          p.sigma = v[1];
          p.r_c = v[2];
          p.beta = v[3];
        } else {
          p.r = v[0];
          p.sigma = v[1];
          p.omega = v[2];
        }
      },
      params);
  return params;
}

/// Checks the declared parameter domains (r, sigma, r_c > 0; beta in [0, 0.5);
/// omega in (0, 1]; 0 < h < k_z). `slack` admits small violations left by
/// soft-constrained training.
inline void validate_params(const ShapeParams& params, Shape3 kernel_shape, double slack = 0.0) {
  const auto fail = [&](const std::string& what) {
    throw ParameterError(std::string(kind_name(kind_of(params))) + ": " + what);
  };
  for (double v : trainable_values(params)) {
    if (!std::isfinite(v)) fail("non-finite parameter");
  }
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if (!(p.r > -slack)) fail("r must be positive");
        if (!(p.sigma > 0.0)) fail("sigma must be positive");
        if constexpr (std::is_same_v<P, ArrowParams>) {
          if (!(p.r_c > -slack)) fail("r_c must be positive");
          if (!(p.beta >= -slack && p.beta < 0.5)) fail("beta must lie in [0, 0.5)");
          if (p.h < 1 || static_cast<std::size_t>(p.h) >= kernel_shape.z) {
            fail("h must satisfy 0 < h < k_z");
          }
        }
        if constexpr (std::is_same_v<P, NegSphereParams>) {
          if (!(p.omega > -slack && p.omega <= 1.0 + slack)) fail("omega must lie in (0, 1]");
        }
      },
      params);
}

namespace detail {
inline double shell_gaussian(double dist2, double radius2, double sigma) {
  const double u = dist2 - radius2;
  return std::exp(-(u * u) / (2.0 * sigma * sigma));
}

inline double arrow_cone_radius(const ArrowParams& p) {
  const double c = std::cos(p.beta * std::numbers::pi);
  if (!(std::abs(c) > 1e-8) || !std::isfinite(p.beta)) {
    throw ParameterError("arrow: beta too close to 0.5, tan(beta*pi) overflows");
  }
  return p.r_c * std::tan(p.beta * std::numbers::pi);
}

inline double horizontal_dist2(Vec3 a, Vec3 c) {
  const double dx = a.x - c.x;
  const double dy = a.y - c.y;
  return dx * dx + dy * dy;
}
}  // namespace detail

inline double eval_cylinder(Vec3 x, const CylinderParams& p, Vec3 c) {
  return detail::shell_gaussian(detail::horizontal_dist2(x, c), p.r * p.r, p.sigma);
}

inline double eval_arrow(Vec3 x, const ArrowParams& p, Vec3 c) {
  const double d2 = detail::horizontal_dist2(x, c);
  if (x.z < static_cast<double>(p.h)) return detail::shell_gaussian(d2, p.r * p.r, p.sigma);
  const double rc = detail::arrow_cone_radius(p);
  return detail::shell_gaussian(d2, rc * rc, p.sigma);
}

inline double eval_negsphere(Vec3 x, const NegSphereParams& p, Vec3 c) {
  const double dz = x.z - c.z;
  return detail::shell_gaussian(detail::horizontal_dist2(x, c) + dz * dz, p.r * p.r, p.sigma) -
         p.omega;
}

/// Kernel-local center: middle of the (y, x) footprint; the sphere is also
/// centered vertically, the cylinder and arrow run from slice 0 upwards.
inline Vec3 kernel_center(KernelKind kind, Shape3 shape) {
  Vec3 c{(static_cast<double>(shape.x) - 1.0) / 2.0, (static_cast<double>(shape.y) - 1.0) / 2.0,
         0.0};
  if (kind == KernelKind::NegSphere) c.z = (static_cast<double>(shape.z) - 1.0) / 2.0;
  return c;
}

/// A discretized kernel. Weights are indexed (z, y, x) like any grid.
struct KernelTensor {
  KernelKind kind = KernelKind::Cylinder;
  Grid3<double> weights;

  const Shape3& shape() const { return weights.shape(); }
};

/// d(normalized weights)/d(parameter), one tensor per trainable parameter.
struct KernelGradients {
  KernelKind kind = KernelKind::Cylinder;
  std::vector<Grid3<double>> d;

  std::span<const std::string_view> names() const { return trainable_names(kind); }
};

namespace detail {

inline void check_evaluable(const ShapeParams& params, Shape3 shape) {
  if (!shape.valid()) throw ShapeError("kernel shape must be at least 1 on every axis");
  for (double v : trainable_values(params)) {
    if (!std::isfinite(v)) throw ParameterError("non-finite kernel parameter");
  }
  std::visit(
      [&](const auto& p) {
        if (p.sigma == 0.0) throw ParameterError("sigma must be non-zero");
      },
      params);
  if (const auto* ar = std::get_if<ArrowParams>(&params)) {
    if (ar->h < 1 || static_cast<std::size_t>(ar->h) >= shape.z) {
      throw ShapeError("arrow: h = " + std::to_string(ar->h) + " must satisfy 0 < h < k_z = " +
                       std::to_string(shape.z));
    }
    (void)arrow_cone_radius(*ar);
  }
}

/// Raw (unnormalized) kernel and, when requested, its derivative per trainable parameter.
inline KernelTensor raw_kernel(const ShapeParams& params, Shape3 shape,
                               std::vector<Grid3<double>>* derivs) {
  check_evaluable(params, shape);
  const KernelKind kind = kind_of(params);
  const Vec3 c = kernel_center(kind, shape);
  KernelTensor k{kind, Grid3<double>(shape, 0.0)};
  if (derivs) derivs->assign(trainable_count(kind), Grid3<double>(shape, 0.0));

  for (std::size_t iz = 0; iz < shape.z; ++iz) {
    for (std::size_t iy = 0; iy < shape.y; ++iy) {
      for (std::size_t ix = 0; ix < shape.x; ++ix) {
        const Vec3 x{static_cast<double>(ix), static_cast<double>(iy), static_cast<double>(iz)};
        const std::size_t i = k.weights.index(iz, iy, ix);
        std::visit(
            [&](const auto& p) {
              using P = std::decay_t<decltype(p)>;
              const double s2 = p.sigma * p.sigma;
              double d2 = horizontal_dist2(x, c);
              if constexpr (std::is_same_v<P, NegSphereParams>) d2 += (x.z - c.z) * (x.z - c.z);
              // Which ring this voxel belongs to, and d(radius)/d(param) for the ring.
              double radius = p.r;
              bool upper = false;
              if constexpr (std::is_same_v<P, ArrowParams>) {
                upper = x.z >= static_cast<double>(p.h);
                if (upper) radius = arrow_cone_radius(p);
              }
              const double u = d2 - radius * radius;
              const double g = std::exp(-(u * u) / (2.0 * s2));
              double w = g;
              if constexpr (std::is_same_v<P, NegSphereParams>) w -= p.omega;
              k.weights[i] = w;
              if (!derivs) return;
              auto& d = *derivs;
              const double dg_dradius = g * 2.0 * u * radius / s2;
              const double dg_dsigma = g * u * u / (s2 * p.sigma);
              if constexpr (std::is_same_v<P, CylinderParams>) {
                d[0][i] = dg_dradius;
                d[1][i] = dg_dsigma;
              } else if constexpr (std::is_same_v<P, ArrowParams>) {
                d[1][i] = dg_dsigma;
                if (upper) {
                  const double angle = p.beta * std::numbers::pi;
                  const double cosv = std::cos(angle);
                  d[2][i] = dg_dradius * std::tan(angle);
                  d[3][i] = dg_dradius * p.r_c * std::numbers::pi / (cosv * cosv);
                } else {
                  d[0][i] = dg_dradius;
                }
              } else {
                d[0][i] = dg_dradius;
                d[1][i] = dg_dsigma;
                d[2][i] = -1.0;
              }
            },
            params);
      }
    }
  }
  return k;
}

inline bool zero_sum_kind(KernelKind kind) { return kind != KernelKind::NegSphere; }

/// Normalizes in place and (optionally) chains raw derivatives through it.
///
/// Cylinder/Arrow: M = K - mean(K). NegSphere: M = K.
/// Result: M / s with s = max(1, |M|_1). At |M|_1 == 1 the capped branch is used.
inline void normalize_in_place(KernelTensor& k, std::vector<Grid3<double>>* derivs) {
  auto& w = k.weights.storage();
  const double n = static_cast<double>(w.size());
  double raw_l1 = 0.0;
  for (double v : w) raw_l1 += std::abs(v);
  if (zero_sum_kind(k.kind)) {
    double sum = 0.0;
    for (double v : w) sum += v;
    const double mean = sum / n;
    for (double& v : w) v -= mean;
    if (derivs) {
      for (auto& d : *derivs) {
        double ds = 0.0;
        for (double v : d.storage()) ds += v;
        const double dmean = ds / n;
        for (double& v : d.storage()) v -= dmean;
      }
    }
  }
  double l1 = 0.0;
  for (double v : w) l1 += std::abs(v);
  if (!(l1 > 1e-12 * raw_l1) || l1 == 0.0) {
    throw ParameterError(std::string(kind_name(k.kind)) +
                         ": kernel is constant (degenerate parameters), normalized weights vanish");
  }
  if (l1 < 1.0) return;  // uncapped branch: derivatives already final
  if (derivs) {
    for (auto& d : *derivs) {
      double dl1 = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] > 0.0) dl1 += d[i];
        else if (w[i] < 0.0) dl1 -= d[i];
      }
      for (std::size_t i = 0; i < w.size(); ++i) d[i] = d[i] / l1 - w[i] * dl1 / (l1 * l1);
    }
  }
  for (double& v : w) v /= l1;
}

}  // namespace detail

/// Samples the continuous kernel at every voxel center of `shape`.
inline KernelTensor discretize(const ShapeParams& params, Shape3 shape) {
  return detail::raw_kernel(params, shape, nullptr);
}

/// Zero-sum (Cylinder, Arrow) followed by an L1 cap at 1 (all kinds).
inline KernelTensor normalize(KernelTensor kernel) {
  detail::normalize_in_place(kernel, nullptr);
  return kernel;
}

inline KernelTensor normalized_kernel(const ShapeParams& params, Shape3 shape) {
  return normalize(discretize(params, shape));
}

/// Normalized kernel together with its parameter gradients.
struct DifferentiableKernel {
  KernelTensor kernel;
  KernelGradients gradients;
};

inline DifferentiableKernel differentiable_kernel(const ShapeParams& params, Shape3 shape) {
  std::vector<Grid3<double>> d;
  KernelTensor k = detail::raw_kernel(params, shape, &d);
  detail::normalize_in_place(k, &d);
  return {std::move(k), KernelGradients{kind_of(params), std::move(d)}};
}

inline KernelGradients kernel_param_gradients(const ShapeParams& params, Shape3 shape) {
  return differentiable_kernel(params, shape).gradients;
}

inline double kernel_sum(const KernelTensor& k) {
  double s = 0.0;
  for (double v : k.weights.values()) s += v;
  return s;
}

inline double kernel_l1(const KernelTensor& k) {
  double s = 0.0;
  for (double v : k.weights.values()) s += std::abs(v);
  return s;
}

/// Debug dump: header `k_z k_y k_x kind`, then one z-major row of x values per (z, y).
inline void save_kvol(const KernelTensor& k, const std::filesystem::path& path) {
  const Shape3 s = k.shape();
  std::string out = std::to_string(s.z) + " " + std::to_string(s.y) + " " + std::to_string(s.x) +
                    " " + std::string(kind_name(k.kind)) + "\n";
  char buf[64];
  for (std::size_t z = 0; z < s.z; ++z) {
    for (std::size_t y = 0; y < s.y; ++y) {
      for (std::size_t x = 0; x < s.x; ++x) {
        const int n = std::snprintf(buf, sizeof(buf), x + 1 < s.x ? "%.9g " : "%.9g\n",
                                    k.weights(z, y, x));
        out.append(buf, static_cast<std::size_t>(n));
      }
    }
  }
  detail::write_file(path, out);
}

}  // namespace geneo
