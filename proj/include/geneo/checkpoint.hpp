// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "geneo/error.hpp"
#include "geneo/model.hpp"

namespace geneo {

inline constexpr int kCheckpointVersion = 1;

/// Trained values may sit this far below zero (the nonnegativity constraint is soft).
inline constexpr double kNonNegativeSlack = 1e-6;

/// Some trainable value or the derived weight sits below the slack.
inline bool violates_nonnegativity(const ModelParams& p) {
  for (double v : p.to_layer_values()) {
    if (v < -kNonNegativeSlack) return true;
  }
  return p.lambda_ns() < -kNonNegativeSlack;
}

/// Training relaxes nonnegativity instead of projecting, so a run may end
/// outside the orthant. Such checkpoints carry `"constraint_violation": true`
/// and are loaded as long as the kernels can still be evaluated.
inline nlohmann::json checkpoint_json(const ModelParams& p) {
  nlohmann::json j;
  j["format_version"] = kCheckpointVersion;
  j["kernel_shape"] = {p.kernel_shape.z, p.kernel_shape.y, p.kernel_shape.x};
  j["tau"] = p.tau;
  j["cylinder"] = {{"r", p.cylinder.r}, {"sigma", p.cylinder.sigma}};
  j["arrow"] = {{"r", p.arrow.r},
                {"sigma", p.arrow.sigma},
                {"h", p.arrow.h},
                {"r_c", p.arrow.r_c},
                {"beta", p.arrow.beta}};
  j["negsphere"] = {{"r", p.negsphere.r}, {"sigma", p.negsphere.sigma}, {"omega", p.negsphere.omega}};
  j["lambda"] = {{"lambda_cy", p.lambda_cy}, {"lambda_ar", p.lambda_ar}, {"lambda_ns", p.lambda_ns()}};
  if (violates_nonnegativity(p)) j["constraint_violation"] = true;
  return j;
}

/// Structural checks shared by checkpoint loading and the CLI. With
/// `flagged_violation` the sign constraints are waived; the kernels must
/// still be evaluable.
inline void validate_model_params(const ModelParams& p, bool flagged_violation = false) {
  if (!p.kernel_shape.valid()) throw CheckpointError("kernel_shape must be positive on every axis");
  if (!(p.tau >= 0.0 && p.tau <= 1.0)) throw CheckpointError("tau must lie in [0, 1]");
  if (flagged_violation) {
    if (!std::isfinite(p.lambda_cy) || !std::isfinite(p.lambda_ar)) throw CheckpointError("non-finite mixing weight");
    try {
      (void)Model(p);
    } catch (const Error& e) {
      throw CheckpointError(e.what());
    }
    return;
  }
  try {
    validate_params(p.cylinder, p.kernel_shape, kNonNegativeSlack);
    validate_params(p.arrow, p.kernel_shape, kNonNegativeSlack);
    validate_params(p.negsphere, p.kernel_shape, kNonNegativeSlack);
  } catch (const ParameterError& e) {
    throw CheckpointError(e.what());
  }
  for (double l : {p.lambda_cy, p.lambda_ar, p.lambda_ns()}) {
    if (!std::isfinite(l)) throw CheckpointError("non-finite mixing weight");
    if (l < -kNonNegativeSlack) throw CheckpointError("mixing weights must be nonnegative");
  }
}

namespace detail {
inline const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                                     const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw CheckpointError("checkpoint is missing field '" + where + key + "'");
  }
  return obj.at(key);
}

inline double require_number(const nlohmann::json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number()) throw CheckpointError("checkpoint field '" + where + key + "' is not a number");
  return v.get<double>();
}
}  // namespace detail

inline ModelParams params_from_json(const nlohmann::json& j) {
  const auto& version = detail::require(j, "format_version", "");
  if (!version.is_number_integer() || version.get<int>() != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint format_version " + version.dump() +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  ModelParams p;
  const auto& shape = detail::require(j, "kernel_shape", "");
  if (!shape.is_array() || shape.size() != 3) {
    throw CheckpointError("checkpoint field 'kernel_shape' must be [k_z, k_y, k_x]");
  }
  for (const auto& v : shape) {
    if (!v.is_number_integer() || v.get<long>() < 1) {
      throw CheckpointError("kernel_shape entries must be positive integers");
    }
  }
  p.kernel_shape = {shape[0].get<std::size_t>(), shape[1].get<std::size_t>(),
                    shape[2].get<std::size_t>()};
  p.tau = detail::require_number(j, "tau", "");

  const auto& cy = detail::require(j, "cylinder", "");
  p.cylinder.r = detail::require_number(cy, "r", "cylinder.");
  p.cylinder.sigma = detail::require_number(cy, "sigma", "cylinder.");

  const auto& ar = detail::require(j, "arrow", "");
  p.arrow.r = detail::require_number(ar, "r", "arrow.");
  p.arrow.sigma = detail::require_number(ar, "sigma", "arrow.");
  const double h = detail::require_number(ar, "h", "arrow.");
  if (h != std::floor(h)) throw CheckpointError("arrow.h must be an integer slice index");
  p.arrow.h = static_cast<int>(h);
  p.arrow.r_c = detail::require_number(ar, "r_c", "arrow.");
  p.arrow.beta = detail::require_number(ar, "beta", "arrow.");

  const auto& ns = detail::require(j, "negsphere", "");
  p.negsphere.r = detail::require_number(ns, "r", "negsphere.");
  p.negsphere.sigma = detail::require_number(ns, "sigma", "negsphere.");
  p.negsphere.omega = detail::require_number(ns, "omega", "negsphere.");

  const auto& lam = detail::require(j, "lambda", "");
  p.lambda_cy = detail::require_number(lam, "lambda_cy", "lambda.");
  p.lambda_ar = detail::require_number(lam, "lambda_ar", "lambda.");
  // lambda_ns is written for readers; it is always re-derived on load.

  bool flagged = false;
  if (j.contains("constraint_violation")) {
    if (!j["constraint_violation"].is_boolean()) throw CheckpointError("'constraint_violation' must be a boolean");
    flagged = j["constraint_violation"].get<bool>();
  }
  validate_model_params(p, flagged);
  return p;
}

inline void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
  detail::write_file(path, checkpoint_json(p).dump(2) + "\n");
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(path.string() + ": invalid JSON: " + e.what());
  }
  return params_from_json(j);
}

/// Counts the scalars of a checkpoint document that are trainable.
inline std::size_t count_trainable(const nlohmann::json& j) {
  std::size_t n = 0;
  for (const char* group : {"cylinder", "arrow", "negsphere"}) {
    for (const auto& [key, value] : j.at(group).items()) {
      if (key != "h" && value.is_number()) ++n;
    }
  }
  for (const char* key : {"lambda_cy", "lambda_ar"}) n += j.at("lambda").contains(key) ? 1 : 0;
  return n;
}

/// Human-readable parameter report grouped by operator.
inline std::string inspect(const ModelParams& p) {
  std::string out;
  char buf[256];
  const auto line = [&](const char* fmt, auto... args) {
    std::snprintf(buf, sizeof(buf), fmt, args...);
    out += buf;
    out += '\n';
  };
  const auto pct = [](double l) { return 100.0 * l; };
  line("GENEO observer, kernel %s, detection threshold tau = %.4f (tuned, not trainable)",
       p.kernel_shape.str().c_str(), p.tau);
  out += '\n';
  line("Cylinder            lambda_cy = %.6f  [trainable]  holds %.2f%% of the output",
       p.lambda_cy, pct(p.lambda_cy));
  line("  r               = %.6f  [trainable]", p.cylinder.r);
  line("  sigma           = %.6f  [trainable]", p.cylinder.sigma);
  line("Arrow               lambda_ar = %.6f  [trainable]  holds %.2f%% of the output",
       p.lambda_ar, pct(p.lambda_ar));
  line("  r               = %.6f  [trainable]", p.arrow.r);
  line("  sigma           = %.6f  [trainable]", p.arrow.sigma);
  line("  h*              = %d  [fixed, not trainable]", p.arrow.h);
  line("  r_c             = %.6f  [trainable]", p.arrow.r_c);
  line("  beta            = %.6f  [trainable]", p.arrow.beta);
  line("Negative sphere     lambda_ns* = %.6f  [derived: 1 - lambda_ar - lambda_cy]  holds %.2f%% of the output",
       p.lambda_ns(), pct(p.lambda_ns()));
  line("  r               = %.6f  [trainable]", p.negsphere.r);
  line("  sigma           = %.6f  [trainable]", p.negsphere.sigma);
  line("  omega           = %.6f  [trainable]", p.negsphere.omega);
  out += '\n';
  line("trainable parameters: %zu", kTrainableCount);
  if (violates_nonnegativity(p)) out += "warning: a trainable value or lambda_ns is negative (soft constraint not met)\n";
  return out;
}

}  // namespace geneo
