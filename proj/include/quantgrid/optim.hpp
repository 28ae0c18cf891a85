#pragma once

#include "quantgrid/autodiff.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace quantgrid {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // global gradient norm cap; <= 0 disables clipping
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adaptive-moment optimizer with bias correction and global-norm clipping.
/// Moment buffers are bound to the parameter order of the first step().
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Clips, then updates every parameter from its grad. Returns the global
  /// gradient norm before clipping. Gradients are left untouched for the
  /// caller to zero.
  double step(std::span<Parameter* const> params);

  long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  long steps_ = 0;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
};

/// Global L2 norm over all parameter gradients.
double global_grad_norm(std::span<Parameter* const> params);

}  // namespace quantgrid
