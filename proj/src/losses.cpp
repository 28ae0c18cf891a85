#include "quantgrid/losses.hpp"

namespace quantgrid {

double hybrid_loss(const Tensor& y, const QuantileForecast& pred, const LossConfig& cfg) {
  cfg.validate();
  for (const Tensor* t : {&pred.low, &pred.median, &pred.high}) {
    if (t->shape() != y.shape()) {
      throw ShapeError("prediction " + to_string(t->shape()) + " does not match target " + to_string(y.shape()));
    }
  }
  return pinball_loss(y.array(), pred.low.array(), cfg.lower()) +
         pinball_loss(y.array(), pred.high.array(), cfg.upper()) + (y.array() - pred.median.array()).abs().mean();
}

Var pinball_loss(Var y, Var yhat, double alpha) {
  require_quantile_level(alpha);
  if (y.shape() != yhat.shape()) {
    throw ShapeError("pinball loss shape mismatch: " + to_string(y.shape()) + " vs " + to_string(yhat.shape()));
  }
  // alpha d + max(-d, 0) with d = y - yhat equals the two-branch form.
  const Var diff = y - yhat;
  return mean(alpha * diff + max_scalar(-1.0 * diff, 0.0));
}

Var mae_loss(Var y, Var yhat) {
  if (y.shape() != yhat.shape()) {
    throw ShapeError("MAE shape mismatch: " + to_string(y.shape()) + " vs " + to_string(yhat.shape()));
  }
  return mean(abs(y - yhat));
}

Var hybrid_loss(Var y, const QuantileOutput& pred, const LossConfig& cfg) {
  cfg.validate();
  return pinball_loss(y, pred.low, cfg.lower()) + pinball_loss(y, pred.high, cfg.upper()) + mae_loss(y, pred.median);
}

}  // namespace quantgrid
