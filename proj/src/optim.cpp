#include "quantgrid/optim.hpp"

#include <cmath>

namespace quantgrid {

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.array().square().sum();
  return std::sqrt(sq);
}

double Adam::step(std::span<Parameter* const> params) {
  if (first_.empty()) {
    for (const Parameter* p : params) {
      first_.push_back(Tensor::zeros(p->value.shape()));
      second_.push_back(Tensor::zeros(p->value.shape()));
    }
  }
  if (first_.size() != params.size()) throw std::invalid_argument("optimizer parameter set changed between steps");

  const double norm = global_grad_norm(params);
  const double factor = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;
  for (const Parameter* p : params) {
    if (!(p->grad.array() * factor).isFinite().all()) {
      throw NonFiniteGradient("non-finite gradient in parameter '" + p->name + "'");
    }
  }

  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    const auto g = (p.grad.array() * factor).eval();
    auto& m = first_[i].array();
    auto& v = second_[i].array();
    m = config_.beta1 * m + (1.0 - config_.beta1) * g;
    v = config_.beta2 * v + (1.0 - config_.beta2) * g.square();
    p.value.array() -= config_.learning_rate * (m / c1) / ((v / c2).sqrt() + config_.epsilon);
  }
  return norm;
}

}  // namespace quantgrid
