#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lst/tape.hpp"

namespace lst {

/// Gradients smaller than this are compared in absolute terms. Key-projection
/// biases have an exactly zero gradient (softmax ignores a per-query shift), so
/// both sides are round-off there and a pure ratio would be meaningless.
inline constexpr double kGradCheckFloor = 1e-7;

struct GradCheckEntry {
  std::string name;
  std::int64_t elements = 0;
  /// max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|, kGradCheckFloor)
  double max_rel_error = 0.0;
  bool ok = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;  // trainable parameters only
  double max_rel_error = 0.0;
  bool ok = true;
};

/// Builds the scalar loss on the given tape.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares backward() against central differences with step h for every
/// trainable parameter in params. All trainable parameters must be float64.
GradCheckReport grad_check(const ParamList& params, const LossBuilder& build_loss, double h = 1e-4,
                           double tol = 1e-4);

std::string format_report(const GradCheckReport& report);

}  // namespace lst
