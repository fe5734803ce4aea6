// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "geneo/error.hpp"

namespace geneo {

/// RMSProp: acc <- decay * acc + (1 - decay) * g^2;  p <- p - lr * g / (sqrt(acc) + stabilizer).
struct RmsProp {
  double learning_rate = 0.001;
  double decay = 0.9;
  double stabilizer = 1e-8;
  std::vector<double> accumulators;

  /// Validates every gradient before touching any parameter, so a rejected step leaves the state intact.
  void step(std::span<double> params, std::span<const double> grads,
            std::span<const std::string> names = {}) {
    if (params.size() != grads.size()) throw ShapeError("optimizer: gradient length mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!std::isfinite(grads[i])) {
        const std::string name = i < names.size() ? names[i] : "#" + std::to_string(i);
        throw NumericalError("non-finite gradient for parameter " + name);
      }
    }
    if (accumulators.size() != params.size()) accumulators.assign(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      accumulators[i] = decay * accumulators[i] + (1.0 - decay) * g * g;
      params[i] -= learning_rate * g / (std::sqrt(accumulators[i]) + stabilizer);
    }
  }
};

}  // namespace geneo
