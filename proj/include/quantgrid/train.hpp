#pragma once

#include "quantgrid/losses.hpp"
#include "quantgrid/model.hpp"
#include "quantgrid/optim.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

namespace quantgrid {

struct TrainConfig {
  int epochs = 50;
  Index batch_size = 32;
  AdamConfig adam;
  Index window = 48;   // input steps
  Index horizon = 12;  // output steps
  std::uint64_t seed = 0;

  void validate() const;
};

/// Affine map between kWh and the model's standardized units.
struct Scaler {
  double mean = 0.0;
  double scale = 1.0;

  static Scaler fit(const Eigen::Ref<const Eigen::MatrixXd>& values);
  double normalize(double v) const { return (v - mean) / scale; }
  double denormalize(double v) const { return v * scale + mean; }
};

/// Model-ready series on the dataset's time grid.
struct PreparedSeries {
  Eigen::MatrixXd load;   // steps x users, standardized
  Eigen::MatrixXd macro;  // steps x users, standardized regional context
  std::vector<TemporalIndex> time;
  Scaler scaler;

  Index steps() const { return load.rows(); }
  Index users() const { return load.cols(); }
};

/// Chronological split of target steps: train [0, train_end),
/// calibration [train_end, calibration_end), test [calibration_end, total).
struct Split {
  Index train_end = 0;
  Index calibration_end = 0;
  Index total = 0;

  static Split chronological(Index total, double train_fraction, double calibration_fraction);
};

/// A sample with target start t has inputs [t - window, t) and targets [t, t + horizon).
class WindowSampler {
 public:
  WindowSampler(const PreparedSeries& series, Index window, Index horizon);

  Batch batch(std::span<const Index> starts) const;
  /// [B, horizon, N] standardized targets.
  Tensor targets(std::span<const Index> starts) const;

  /// Starts whose inputs and targets lie inside [begin, end).
  std::vector<Index> full_windows(Index begin, Index end) const;
  /// Starts in [begin, end) with enough history (targets may run past end).
  std::vector<Index> forecast_starts(Index begin, Index end) const;

  Index window() const { return window_; }
  Index horizon() const { return horizon_; }
  const PreparedSeries& series() const { return series_; }

 private:
  const PreparedSeries& series_;
  Index window_;
  Index horizon_;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, long step) : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // sample-weighted mean hybrid loss per epoch
  long steps = 0;
};

/// Seeded mini-batch training. Writes one JSON line {"epoch","step","loss"}
/// per optimizer step to `trace` when given.
TrainResult train(Model& model, const WindowSampler& sampler, std::span<const Index> train_starts,
                  const TrainConfig& cfg, const LossConfig& loss, std::ostream* trace = nullptr);

/// Model forecast in kWh for the given starts.
QuantileForecast forecast_kwh(Model& model, const WindowSampler& sampler, std::span<const Index> starts,
                              Index batch_size = 64);

}  // namespace quantgrid
