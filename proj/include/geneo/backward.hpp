// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "geneo/conv.hpp"
#include "geneo/kernels.hpp"
#include "geneo/losses.hpp"
#include "geneo/model.hpp"

namespace geneo {

/// Loss value and gradient for one scene.
struct SceneGradient {
  LossTerms loss;
  /// d(seg + tversky)/d(parameters), flattened layer layout. The penalty is
  /// not included: it does not depend on the scene.
  std::vector<double> data_grad;
};

/// Holds the normalized kernels and their parameter derivatives for one
/// parameter state, then differentiates the loss of any number of scenes.
///
/// Chain: dL/dprob -> dprob/dobserver (tanh', ReLU) -> conv adjoint gives
/// dL/d(combined kernel) -> per-operator kernel derivatives and lambdas.
class LayerDifferentiator {
 public:
  explicit LayerDifferentiator(GeneoLayer layer) : layer_(std::move(layer)) {
    const auto lambdas = layer_.lambdas();
    combined_ = Grid3<double>(layer_.kernel_shape, 0.0);
    for (std::size_t i = 0; i < layer_.operators.size(); ++i) {
      kernels_.push_back(differentiable_kernel(layer_.operators[i], layer_.kernel_shape));
      const auto& w = kernels_.back().kernel.weights;
      for (std::size_t j = 0; j < w.size(); ++j) combined_[j] += lambdas[i] * w[j];
    }
  }

  const GeneoLayer& layer() const { return layer_; }

  SceneGradient scene(const Grid3<double>& grid, const VoxelLabelGrid& labels,
                      const LossConfig& cfg) const {
    require_same_shape(grid, labels, "backward");
    const Grid3<double> response = conv3d(grid, combined_);
    const Grid3<double> prob = Model::probability(response);
    const Grid3<double> weights = weight_map(labels, cfg.alpha, cfg.epsilon);

    SceneGradient out;
    out.loss.seg = seg_loss(prob, labels, weights);
    out.loss.penalty = negativity_penalty(layer_, cfg.rho_l, cfg.rho_t);

    const std::size_t n = grid.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    Grid3<double> upstream(grid.shape(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double y = labels[i] ? 1.0 : 0.0;
      upstream[i] = 2.0 * weights[i] * (prob[i] - y) * inv_n;
    }
    if (cfg.tversky_enabled) {
      const auto s = detail::tversky_sums(prob, labels);
      const double num = s.overlap + cfg.tversky_delta;
      const double den = s.overlap + cfg.tversky_alpha * s.false_pos +
                         cfg.tversky_beta * s.false_neg + cfg.tversky_delta;
      out.loss.tversky = cfg.tversky_mix * (1.0 - num / den);
      // d(1 - N/D)/dp = -(dN * D - N * dD) / D^2
      const double dd_pos = 1.0 - cfg.tversky_beta;
      const double dd_neg = cfg.tversky_alpha;
      for (std::size_t i = 0; i < n; ++i) {
        const bool y = labels[i] != 0;
        const double dn = y ? 1.0 : 0.0;
        const double dd = y ? dd_pos : dd_neg;
        upstream[i] += cfg.tversky_mix * (-(dn * den - num * dd) / (den * den));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (response[i] > 0.0) {
        const double t = prob[i];
        upstream[i] *= 1.0 - t * t;
      } else {
        upstream[i] = 0.0;
      }
    }

    const Grid3<double> dkernel = kernel_adjoint(upstream, grid, layer_.kernel_shape);
    out.data_grad = kernel_chain(dkernel);
    return out;
  }

  /// Maps dL/d(combined kernel) onto the flattened parameters.
  std::vector<double> kernel_chain(const Grid3<double>& dkernel) const {
    const auto lambdas = layer_.lambdas();
    std::vector<double> g;
    g.reserve(layer_.parameter_count());
    for (std::size_t i = 0; i < kernels_.size(); ++i) {
      for (const auto& d : kernels_[i].gradients.d) {
        double s = 0.0;
        for (std::size_t j = 0; j < d.size(); ++j) s += dkernel[j] * d[j];
        g.push_back(lambdas[i] * s);
      }
    }
    const auto& last = kernels_.back().kernel.weights;
    for (std::size_t i = 0; i + 1 < kernels_.size(); ++i) {
      const auto& w = kernels_[i].kernel.weights;
      double s = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) s += dkernel[j] * (w[j] - last[j]);
      g.push_back(s);
    }
    return g;
  }

 private:
  GeneoLayer layer_;
  std::vector<DifferentiableKernel> kernels_;
  Grid3<double> combined_;
};

/// Loss terms and full gradient (data + penalty) of one scene.
struct LossAndGradient {
  LossTerms loss;
  std::vector<double> grad;
};

inline LossAndGradient loss_and_gradient(const GeneoLayer& layer, const Grid3<double>& grid,
                                         const VoxelLabelGrid& labels, const LossConfig& cfg) {
  const LayerDifferentiator diff(layer);
  auto sg = diff.scene(grid, labels, cfg);
  const auto pg = negativity_penalty_gradient(layer, cfg.rho_l, cfg.rho_t);
  for (std::size_t i = 0; i < pg.size(); ++i) sg.data_grad[i] += pg[i];
  return {sg.loss, std::move(sg.data_grad)};
}

/// Gradient of total_loss over the 11 trainable values, in kTrainableNames order.
inline std::array<double, kTrainableCount> backward(const Grid3<double>& grid,
                                                    const VoxelLabelGrid& labels,
                                                    const ModelParams& params,
                                                    const LossConfig& cfg) {
  const auto r = loss_and_gradient(to_layer(params), grid, labels, cfg);
  std::array<double, kTrainableCount> g{};
  std::copy(r.grad.begin(), r.grad.end(), g.begin());
  return g;
}

/// Forward-only objective, the reference the gradient is checked against.
inline double evaluate_total_loss(const GeneoLayer& layer, const Grid3<double>& grid,
                                  const VoxelLabelGrid& labels, const LossConfig& cfg) {
  const Model model(layer);
  return loss_terms(model.forward(grid), labels, layer, cfg).total();
}

}  // namespace geneo
