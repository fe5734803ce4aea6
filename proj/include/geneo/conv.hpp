// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <utility>
#include <vector>

#include "geneo/error.hpp"
#include "geneo/grid.hpp"
#include "geneo/kernels.hpp"
#include "geneo/parallel.hpp"

namespace geneo {

/// Kernel cell aligned with the output voxel: the center for odd extents,
/// the floor-center for even ones.
inline Offset3 kernel_anchor(Shape3 k) {
  return {static_cast<long>((k.z - 1) / 2), static_cast<long>((k.y - 1) / 2),
          static_cast<long>((k.x - 1) / 2)};
}

namespace detail {
inline void check_conv_shapes(Shape3 grid, Shape3 kernel) {
  if (!grid.valid() || !kernel.valid()) throw ShapeError("conv3d: empty grid or kernel");
  if (kernel.z > grid.z || kernel.y > grid.y || kernel.x > grid.x) {
    throw ShapeError("conv3d: kernel " + kernel.str() + " larger than grid " + grid.str());
  }
}

inline long clamp_lo(long v) { return v < 0 ? 0 : v; }
}  // namespace detail

/// Reference path: out(v) = sum_k K(k) * in(v + k - anchor), zero outside the grid.
inline Grid3<double> conv3d_direct(const Grid3<double>& grid, const Grid3<double>& kernel) {
  const Shape3 g = grid.shape();
  const Shape3 k = kernel.shape();
  detail::check_conv_shapes(g, k);
  const Offset3 a = kernel_anchor(k);
  Grid3<double> out(g, 0.0);
  parallel_for(0, g.z, [&](std::size_t vz) {
    for (std::size_t vy = 0; vy < g.y; ++vy) {
      for (std::size_t vx = 0; vx < g.x; ++vx) {
        double acc = 0.0;
        for (std::size_t kz = 0; kz < k.z; ++kz) {
          const long z = static_cast<long>(vz + kz) - a.z;
          if (z < 0 || z >= static_cast<long>(g.z)) continue;
          for (std::size_t ky = 0; ky < k.y; ++ky) {
            const long y = static_cast<long>(vy + ky) - a.y;
            if (y < 0 || y >= static_cast<long>(g.y)) continue;
            for (std::size_t kx = 0; kx < k.x; ++kx) {
              const long x = static_cast<long>(vx + kx) - a.x;
              if (x < 0 || x >= static_cast<long>(g.x)) continue;
              acc += kernel(kz, ky, kx) * grid(static_cast<std::size_t>(z),
                                               static_cast<std::size_t>(y),
                                               static_cast<std::size_t>(x));
            }
          }
        }
        out(vz, vy, vx) = acc;
      }
    }
  });
  return out;
}

/// Scatter path over non-zero input voxels; cost scales with occupancy.
/// Output z-slabs are owned by one worker each, and every output voxel sums its
/// contributions in input order, so the result does not depend on the thread count.
inline Grid3<double> conv3d_sparse(const Grid3<double>& grid, const Grid3<double>& kernel) {
  const Shape3 g = grid.shape();
  const Shape3 k = kernel.shape();
  detail::check_conv_shapes(g, k);
  const Offset3 a = kernel_anchor(k);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] != 0.0) active.push_back(i);
  }
  Grid3<double> out(g, 0.0);
  const std::size_t slabs = std::min<std::size_t>(g.z, std::max<std::size_t>(1, thread_count()));
  parallel_for(0, slabs, [&](std::size_t s) {
    const long z_lo = static_cast<long>(g.z * s / slabs);
    const long z_hi = static_cast<long>(g.z * (s + 1) / slabs);
    for (std::size_t idx : active) {
      const long uz = static_cast<long>(idx / (g.y * g.x));
      const long uy = static_cast<long>((idx / g.x) % g.y);
      const long ux = static_cast<long>(idx % g.x);
      const double value = grid[idx];
      // out(v) += K(u - v + a) * in(u)  for  v = u + a - k
      for (std::size_t kz = 0; kz < k.z; ++kz) {
        const long vz = uz + a.z - static_cast<long>(kz);
        if (vz < z_lo || vz >= z_hi) continue;
        for (std::size_t ky = 0; ky < k.y; ++ky) {
          const long vy = uy + a.y - static_cast<long>(ky);
          if (vy < 0 || vy >= static_cast<long>(g.y)) continue;
          const std::size_t row = (static_cast<std::size_t>(vz) * g.y + static_cast<std::size_t>(vy)) * g.x;
          const double* krow = &kernel(kz, ky, 0);
          const long kx_lo = std::max<long>(0, ux + a.x - static_cast<long>(g.x) + 1);
          const long kx_hi = std::min<long>(static_cast<long>(k.x), ux + a.x + 1);
          for (long kx = kx_lo; kx < kx_hi; ++kx) {
            out[row + static_cast<std::size_t>(ux + a.x - kx)] += krow[kx] * value;
          }
        }
      }
    }
  });
  return out;
}

/// Dispatches to the scatter path for sparse inputs (occupancy grids) and to
/// the direct path otherwise. Both agree to within rounding.
inline Grid3<double> conv3d(const Grid3<double>& grid, const Grid3<double>& kernel) {
  std::size_t nonzero = 0;
  for (double v : grid.values()) nonzero += (v != 0.0);
  if (nonzero * 4 <= grid.size()) return conv3d_sparse(grid, kernel);
  return conv3d_direct(grid, kernel);
}

inline Grid3<double> conv3d(const Grid3<double>& grid, const KernelTensor& kernel) {
  return conv3d(grid, kernel.weights);
}

/// Adjoint of conv3d with respect to the kernel:
/// G(k) = sum_v upstream(v) * in(v + k - anchor). Skips zero input voxels.
inline Grid3<double> kernel_adjoint(const Grid3<double>& upstream, const Grid3<double>& grid,
                                    Shape3 kernel_shape) {
  require_same_shape(upstream, grid, "kernel_adjoint");
  const Shape3 g = grid.shape();
  const Shape3 k = kernel_shape;
  detail::check_conv_shapes(g, k);
  const Offset3 a = kernel_anchor(k);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] != 0.0) active.push_back(i);
  }
  Grid3<double> out(k, 0.0);
  parallel_for(0, k.z, [&](std::size_t kz) {
    for (std::size_t idx : active) {
      const long uz = static_cast<long>(idx / (g.y * g.x));
      const long vz = uz + a.z - static_cast<long>(kz);
      if (vz < 0 || vz >= static_cast<long>(g.z)) continue;
      const long uy = static_cast<long>((idx / g.x) % g.y);
      const long ux = static_cast<long>(idx % g.x);
      const double value = grid[idx];
      for (std::size_t ky = 0; ky < k.y; ++ky) {
        const long vy = uy + a.y - static_cast<long>(ky);
        if (vy < 0 || vy >= static_cast<long>(g.y)) continue;
        const std::size_t row = (static_cast<std::size_t>(vz) * g.y + static_cast<std::size_t>(vy)) * g.x;
        const long kx_lo = std::max<long>(0, ux + a.x - static_cast<long>(g.x) + 1);
        const long kx_hi = std::min<long>(static_cast<long>(k.x), ux + a.x + 1);
        for (long kx = kx_lo; kx < kx_hi; ++kx) {
          out(kz, ky, static_cast<std::size_t>(kx)) +=
              upstream[row + static_cast<std::size_t>(ux + a.x - kx)] * value;
        }
      }
    }
  });
  return out;
}

/// Shifts contents by `offset`; vacated voxels become zero.
inline Grid3<double> translate_grid(const Grid3<double>& grid, Offset3 offset) {
  const Shape3 s = grid.shape();
  for (std::size_t a = 0; a < 3; ++a) {
    if (static_cast<std::size_t>(std::labs(offset[a])) >= s[a]) {
      throw ShapeError("translate_grid: offset out of range on axis " + std::to_string(a));
    }
  }
  Grid3<double> out(s, 0.0);
  for (std::size_t z = 0; z < s.z; ++z) {
    const long tz = static_cast<long>(z) + offset.z;
    if (tz < 0 || tz >= static_cast<long>(s.z)) continue;
    for (std::size_t y = 0; y < s.y; ++y) {
      const long ty = static_cast<long>(y) + offset.y;
      if (ty < 0 || ty >= static_cast<long>(s.y)) continue;
      for (std::size_t x = 0; x < s.x; ++x) {
        const long tx = static_cast<long>(x) + offset.x;
        if (tx < 0 || tx >= static_cast<long>(s.x)) continue;
        out(static_cast<std::size_t>(tz), static_cast<std::size_t>(ty),
            static_cast<std::size_t>(tx)) = grid(z, y, x);
      }
    }
  }
  return out;
}

/// max |conv(translate(grid)) - translate(conv(grid))| over voxels at least
/// (kernel extent + |offset|) away from every face, where zero padding cannot
/// leak into either side.
inline double check_equivariance(const Grid3<double>& kernel, const Grid3<double>& grid,
                                 Offset3 offset) {
  const Shape3 s = grid.shape();
  std::array<std::size_t, 3> margin{};
  for (std::size_t a = 0; a < 3; ++a) {
    margin[a] = kernel.shape()[a] + static_cast<std::size_t>(std::labs(offset[a]));
    if (2 * margin[a] >= s[a]) {
      throw ShapeError("check_equivariance: no interior region left on axis " + std::to_string(a));
    }
  }
  const Grid3<double> lhs = conv3d(translate_grid(grid, offset), kernel);
  const Grid3<double> rhs = translate_grid(conv3d(grid, kernel), offset);
  double worst = 0.0;
  for (std::size_t z = margin[0]; z < s.z - margin[0]; ++z) {
    for (std::size_t y = margin[1]; y < s.y - margin[1]; ++y) {
      for (std::size_t x = margin[2]; x < s.x - margin[2]; ++x) {
        worst = std::max(worst, std::abs(lhs(z, y, x) - rhs(z, y, x)));
      }
    }
  }
  return worst;
}

inline double check_equivariance(const KernelTensor& kernel, const Grid3<double>& grid,
                                 Offset3 offset) {
  return check_equivariance(kernel.weights, grid, offset);
}

/// Sup-norm sides of the non-expansivity inequality.
struct NonExpansivity {
  double lhs = 0.0;  ///< |conv(a) - conv(b)|_inf
  double rhs = 0.0;  ///< |a - b|_inf
};

inline double sup_distance(const Grid3<double>& a, const Grid3<double>& b) {
  require_same_shape(a, b, "sup_distance");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline NonExpansivity check_nonexpansivity(const Grid3<double>& kernel, const Grid3<double>& a,
                                           const Grid3<double>& b) {
  require_same_shape(a, b, "check_nonexpansivity");
  return {sup_distance(conv3d(a, kernel), conv3d(b, kernel)), sup_distance(a, b)};
}

inline NonExpansivity check_nonexpansivity(const KernelTensor& kernel, const Grid3<double>& a,
                                           const Grid3<double>& b) {
  return check_nonexpansivity(kernel.weights, a, b);
}

}  // namespace geneo
