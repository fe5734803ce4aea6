// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "geneo/conv.hpp"
#include "geneo/grid.hpp"
#include "geneo/kernels.hpp"
#include "geneo/voxelize.hpp"

namespace geneo {

/// K parametric operators mixed by convex weights. The first K - 1 weights
/// are free; the last is 1 minus their sum.
///
/// Flattened trainable layout: every operator's trainable shape values in
/// operator order, then the K - 1 free weights.
struct GeneoLayer {
  std::vector<ShapeParams> operators;
  std::vector<double> free_lambdas;
  Shape3 kernel_shape{9, 9, 9};
  double tau = 0.5;

  std::size_t operator_count() const { return operators.size(); }

  double derived_lambda() const {
    double s = 1.0;
    for (double l : free_lambdas) s -= l;
    return s;
  }

  std::vector<double> lambdas() const {
    std::vector<double> out = free_lambdas;
    out.push_back(derived_lambda());
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = free_lambdas.size();
    for (const auto& op : operators) n += trainable_count(kind_of(op));
    return n;
  }

  std::vector<double> parameters() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& op : operators) {
      const auto v = trainable_values(op);
      out.insert(out.end(), v.begin(), v.end());
    }
    out.insert(out.end(), free_lambdas.begin(), free_lambdas.end());
    return out;
  }

  void set_parameters(std::span<const double> values) {
    if (values.size() != parameter_count()) throw ShapeError("parameter vector has wrong length");
    std::size_t pos = 0;
    for (auto& op : operators) {
      const std::size_t n = trainable_count(kind_of(op));
      op = with_trainable_values(op, values.subspan(pos, n));
      pos += n;
    }
    for (double& l : free_lambdas) l = values[pos++];
  }

  /// "cylinder.r", ..., "lambda_0" style names; duplicated kinds get an index suffix.
  std::vector<std::string> parameter_names() const {
    std::array<int, 3> seen{};
    std::array<int, 3> total{};
    for (const auto& op : operators) ++total[static_cast<int>(kind_of(op))];
    std::vector<std::string> out;
    std::vector<std::string> op_names;
    for (const auto& op : operators) {
      const int k = static_cast<int>(kind_of(op));
      std::string base(kind_name(kind_of(op)));
      if (total[k] > 1) base += std::to_string(seen[k]);
      ++seen[k];
      op_names.push_back(base);
      for (auto n : trainable_names(kind_of(op))) out.push_back(base + "." + std::string(n));
    }
    for (std::size_t i = 0; i < free_lambdas.size(); ++i) out.push_back("lambda_" + op_names[i]);
    return out;
  }
};

inline constexpr std::size_t kTrainableCount = 11;

/// The production three-operator model: cylinder, arrow, negative sphere.
struct ModelParams {
  CylinderParams cylinder;
  ArrowParams arrow;
  NegSphereParams negsphere;
  double lambda_cy = 1.0 / 3.0;
  double lambda_ar = 1.0 / 3.0;
  Shape3 kernel_shape{9, 9, 9};
  double tau = 0.5;

  double lambda_ns() const { return 1.0 - lambda_cy - lambda_ar; }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.to_layer_values() == b.to_layer_values() && a.arrow.h == b.arrow.h &&
           a.kernel_shape == b.kernel_shape && a.tau == b.tau;
  }

  std::array<double, kTrainableCount> to_layer_values() const {
    return {cylinder.r, cylinder.sigma, arrow.r, arrow.sigma, arrow.r_c, arrow.beta,
            negsphere.r, negsphere.sigma, negsphere.omega, lambda_cy, lambda_ar};
  }
};

inline constexpr std::array<std::string_view, kTrainableCount> kTrainableNames{
    "cylinder.r",   "cylinder.sigma", "arrow.r",          "arrow.sigma",
    "arrow.r_c",    "arrow.beta",     "negsphere.r",      "negsphere.sigma",
    "negsphere.omega", "lambda_cy",   "lambda_ar"};

inline GeneoLayer to_layer(const ModelParams& p) {
  return GeneoLayer{{p.cylinder, p.arrow, p.negsphere}, {p.lambda_cy, p.lambda_ar},
                    p.kernel_shape, p.tau};
}

inline bool is_standard_layout(const GeneoLayer& layer) {
  return layer.operators.size() == 3 && kind_of(layer.operators[0]) == KernelKind::Cylinder &&
         kind_of(layer.operators[1]) == KernelKind::Arrow &&
         kind_of(layer.operators[2]) == KernelKind::NegSphere && layer.free_lambdas.size() == 2;
}

inline ModelParams from_layer(const GeneoLayer& layer) {
  if (!is_standard_layout(layer)) {
    throw ShapeError("layer is not the cylinder/arrow/negsphere production layout");
  }
  ModelParams p;
  p.cylinder = std::get<CylinderParams>(layer.operators[0]);
  p.arrow = std::get<ArrowParams>(layer.operators[1]);
  p.negsphere = std::get<NegSphereParams>(layer.operators[2]);
  p.lambda_cy = layer.free_lambdas[0];
  p.lambda_ar = layer.free_lambdas[1];
  p.kernel_shape = layer.kernel_shape;
  p.tau = layer.tau;
  return p;
}

inline std::array<double, kTrainableCount> trainable_vector(const ModelParams& p) {
  return p.to_layer_values();
}

inline ModelParams with_trainable_vector(ModelParams p, std::span<const double> v) {
  auto layer = to_layer(p);
  layer.set_parameters(v);
  return from_layer(layer);
}

/// Same trainable values on a new kernel discretization. h keeps its
/// fraction of the kernel depth: round(h * k_z' / k_z), clamped to [1, k_z' - 1].
inline ModelParams rediscretize(ModelParams p, Shape3 new_shape) {
  if (!new_shape.valid() || new_shape.z < 2) {
    throw ShapeError("rediscretize: kernel shape " + new_shape.str() + " cannot hold the arrow split");
  }
  const double scaled = static_cast<double>(p.arrow.h) * static_cast<double>(new_shape.z) /
                        static_cast<double>(p.kernel_shape.z);
  const long h = std::lround(scaled);
  p.arrow.h = static_cast<int>(std::clamp<long>(h, 1, static_cast<long>(new_shape.z) - 1));
  p.kernel_shape = new_shape;
  return p;
}

/// A layer with its normalized kernels built. Construct once per parameter
/// state; inference is then read-only and safe to share across threads.
class Model {
 public:
  explicit Model(GeneoLayer layer) : layer_(std::move(layer)) { rebuild(); }
  explicit Model(const ModelParams& params) : Model(to_layer(params)) {}

  const GeneoLayer& layer() const { return layer_; }
  const std::vector<KernelTensor>& kernels() const { return kernels_; }
  /// sum_i lambda_i * K_i; the observer is one convolution with it.
  const Grid3<double>& combined_kernel() const { return combined_; }

  void set_layer(GeneoLayer layer) {
    layer_ = std::move(layer);
    rebuild();
  }

  /// Convex combination of the operator responses.
  Grid3<double> observer(const Grid3<double>& grid) const { return conv3d(grid, combined_); }

  /// max(0, tanh(observer)).
  Grid3<double> forward(const Grid3<double>& grid) const {
    return probability(observer(grid));
  }

  MaskGrid predict(const Grid3<double>& grid) const { return threshold(forward(grid), layer_.tau); }

  /// Unweighted response of each operator, in operator order.
  std::vector<Grid3<double>> per_operator_responses(const Grid3<double>& grid) const {
    std::vector<Grid3<double>> out;
    out.reserve(kernels_.size());
    for (const auto& k : kernels_) out.push_back(conv3d(grid, k));
    return out;
  }

  static Grid3<double> probability(Grid3<double> response) {
    for (double& v : response.storage()) v = v > 0.0 ? std::tanh(v) : 0.0;
    return response;
  }

  static MaskGrid threshold(const Grid3<double>& prob, double tau) {
    MaskGrid m(prob.shape(), 0);
    for (std::size_t i = 0; i < prob.size(); ++i) m[i] = prob[i] >= tau ? 1 : 0;
    return m;
  }

 private:
  void rebuild() {
    if (layer_.operators.empty()) throw ShapeError("a model needs at least one operator");
    if (layer_.free_lambdas.size() + 1 != layer_.operators.size()) {
      throw ShapeError("a layer with K operators has K - 1 free weights");
    }
    kernels_.clear();
    combined_ = Grid3<double>(layer_.kernel_shape, 0.0);
    const auto lambdas = layer_.lambdas();
    for (std::size_t i = 0; i < layer_.operators.size(); ++i) {
      kernels_.push_back(normalized_kernel(layer_.operators[i], layer_.kernel_shape));
      const auto& w = kernels_.back().weights;
      for (std::size_t j = 0; j < w.size(); ++j) combined_[j] += lambdas[i] * w[j];
    }
  }

  GeneoLayer layer_;
  std::vector<KernelTensor> kernels_;
  Grid3<double> combined_;
};

inline Grid3<double> observer(const Grid3<double>& grid, const ModelParams& p) {
  return Model(p).observer(grid);
}
inline Grid3<double> forward(const Grid3<double>& grid, const ModelParams& p) {
  return Model(p).forward(grid);
}
inline MaskGrid predict(const Grid3<double>& grid, const ModelParams& p) {
  return Model(p).predict(grid);
}

/// Unweighted cylinder, arrow and negative-sphere responses for attribution.
struct GeneoResponses {
  Grid3<double> cylinder;
  Grid3<double> arrow;
  Grid3<double> negsphere;
};

inline GeneoResponses per_geneo_responses(const Grid3<double>& grid, const ModelParams& p) {
  auto r = Model(p).per_operator_responses(grid);
  return {std::move(r[0]), std::move(r[1]), std::move(r[2])};
}

}  // namespace geneo
