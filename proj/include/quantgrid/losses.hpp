#pragma once

#include "quantgrid/autodiff.hpp"
#include "quantgrid/model.hpp"

#include <Eigen/Core>

#include <stdexcept>

namespace quantgrid {

/// Symmetric quantile pair for a miscoverage rate alpha: (alpha/2, 1 - alpha/2).
struct LossConfig {
  double alpha = 0.1;

  double lower() const { return alpha / 2.0; }
  double upper() const { return 1.0 - alpha / 2.0; }
  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  }
};

inline void require_quantile_level(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1)");
}

/// Mean over elements of max(alpha (y - yhat), (alpha - 1)(y - yhat)).
template <typename DerivedY, typename DerivedP>
double pinball_loss(const Eigen::ArrayBase<DerivedY>& y, const Eigen::ArrayBase<DerivedP>& yhat, double alpha) {
  require_quantile_level(alpha);
  if (y.size() != yhat.size() || y.size() == 0) throw ShapeError("pinball loss needs equal, non-empty operands");
  const auto diff = (y.derived() - yhat.derived()).eval();
  return (alpha * diff).max((alpha - 1.0) * diff).mean();
}

double hybrid_loss(const Tensor& y, const QuantileForecast& pred, const LossConfig& cfg);

/// Differentiable pinball loss; d/d(yhat) at y == yhat is -alpha.
Var pinball_loss(Var y, Var yhat, double alpha);
Var mae_loss(Var y, Var yhat);
/// pinball(low, alpha_lo) + pinball(high, alpha_up) + MAE(median).
Var hybrid_loss(Var y, const QuantileOutput& pred, const LossConfig& cfg);

}  // namespace quantgrid
