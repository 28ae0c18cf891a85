#pragma once

#include "quantgrid/autodiff.hpp"

#include <functional>
#include <span>

namespace quantgrid {

/// Absolute floor added to |analytic| in the relative-error denominator.
inline constexpr double kGradCheckFloor = 1e-6;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  Index coordinates = 0;
};

using LossBuilder = std::function<Var(Graph&)>;

/// Compares backward() against central differences over every coordinate of
/// `params`. The error of one coordinate is |analytic - numeric| / (|analytic| + floor).
/// Parameter gradients are zeroed before and after the check; values are restored.
GradCheckReport finite_diff_check(const LossBuilder& loss, std::span<Parameter* const> params, double step,
                                  double floor = kGradCheckFloor);

}  // namespace quantgrid
