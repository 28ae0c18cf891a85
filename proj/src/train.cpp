#include "quantgrid/train.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace quantgrid {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train.epochs must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be positive");
  if (window < 1) throw std::invalid_argument("train.window must be positive");
  if (horizon < 1) throw std::invalid_argument("train.horizon must be positive");
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw std::invalid_argument("train moment coefficients must lie in [0, 1)");
  }
}

Scaler Scaler::fit(const Eigen::Ref<const Eigen::MatrixXd>& values) {
  Scaler s;
  s.mean = values.mean();
  const double var = (values.array() - s.mean).square().mean();
  s.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  return s;
}

Split Split::chronological(Index total, double train_fraction, double calibration_fraction) {
  if (!(train_fraction > 0.0 && calibration_fraction > 0.0 && train_fraction + calibration_fraction < 1.0)) {
    throw std::invalid_argument("split fractions must be positive and sum to 1");
  }
  Split s;
  s.total = total;
  s.train_end = static_cast<Index>(std::llround(static_cast<double>(total) * train_fraction));
  s.calibration_end = static_cast<Index>(std::llround(static_cast<double>(total) * (train_fraction + calibration_fraction)));
  if (s.train_end < 1 || s.calibration_end <= s.train_end || s.calibration_end >= total) {
    throw std::invalid_argument("series of " + std::to_string(total) + " steps is too short to split");
  }
  return s;
}

WindowSampler::WindowSampler(const PreparedSeries& series, Index window, Index horizon)
    : series_(series), window_(window), horizon_(horizon) {
  if (window < 1 || horizon < 1) throw std::invalid_argument("window and horizon must be positive");
}

Batch WindowSampler::batch(std::span<const Index> starts) const {
  const auto b = static_cast<Index>(starts.size());
  const Index n = series_.users();
  Batch out{Tensor({b, window_, n}), Tensor({b, window_, n}), {}};
  for (Index i = 0; i < b; ++i) {
    const Index t0 = starts[static_cast<std::size_t>(i)] - window_;
    if (t0 < 0 || t0 + window_ > series_.steps()) throw std::out_of_range("window outside the series");
    out.load.flat_matrix(n).middleRows(i * window_, window_) = series_.load.middleRows(t0, window_);
    out.macro.flat_matrix(n).middleRows(i * window_, window_) = series_.macro.middleRows(t0, window_);
    out.time.push_back(series_.time[static_cast<std::size_t>(t0 + window_ - 1)]);
  }
  return out;
}

Tensor WindowSampler::targets(std::span<const Index> starts) const {
  const auto b = static_cast<Index>(starts.size());
  const Index n = series_.users();
  Tensor y({b, horizon_, n});
  for (Index i = 0; i < b; ++i) {
    const Index t = starts[static_cast<std::size_t>(i)];
    if (t + horizon_ > series_.steps()) throw std::out_of_range("targets outside the series");
    y.flat_matrix(n).middleRows(i * horizon_, horizon_) = series_.load.middleRows(t, horizon_);
  }
  return y;
}

std::vector<Index> WindowSampler::full_windows(Index begin, Index end) const {
  std::vector<Index> out;
  for (Index t = std::max(begin, window_); t + horizon_ <= std::min(end, series_.steps()); ++t) out.push_back(t);
  return out;
}

std::vector<Index> WindowSampler::forecast_starts(Index begin, Index end) const {
  std::vector<Index> out;
  for (Index t = std::max(begin, window_); t < std::min(end, series_.steps()); ++t) out.push_back(t);
  return out;
}

TrainResult train(Model& model, const WindowSampler& sampler, std::span<const Index> train_starts,
                  const TrainConfig& cfg, const LossConfig& loss_cfg, std::ostream* trace) {
  cfg.validate();
  loss_cfg.validate();
  TrainResult result;
  if (cfg.epochs == 0) return result;
  if (train_starts.empty()) throw std::invalid_argument("training set is empty");
  if (sampler.horizon() != model.config().horizon) {
    throw std::invalid_argument("sampler horizon does not match the model horizon");
  }

  std::mt19937_64 rng(cfg.seed);
  Adam optimizer(cfg.adam);
  auto params = model.parameters();
  std::vector<Index> order(train_starts.begin(), train_starts.end());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t count = std::min(order.size() - first, static_cast<std::size_t>(cfg.batch_size));
      const std::span<const Index> starts(order.data() + first, count);
      ++result.steps;

      for (Parameter* p : params) p->zero_grad();
      Graph g;
      const auto pred = model.forward(g, sampler.batch(starts));
      const Var loss = hybrid_loss(g.constant(sampler.targets(starts)), pred, loss_cfg);
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw TrainingDiverged("loss became non-finite at step " + std::to_string(result.steps), result.steps);
      }
      g.backward(loss);
      try {
        optimizer.step(params);
      } catch (const NonFiniteGradient& e) {
        throw TrainingDiverged(std::string(e.what()) + " at step " + std::to_string(result.steps), result.steps);
      }
      model.refresh_centroids();

      weighted += value * static_cast<double>(count);
      if (trace) {
        *trace << "{\"epoch\":" << epoch << ",\"step\":" << result.steps << ",\"loss\":" << value << "}\n";
      }
    }
    result.epoch_loss.push_back(weighted / static_cast<double>(order.size()));
  }
  return result;
}

QuantileForecast forecast_kwh(Model& model, const WindowSampler& sampler, std::span<const Index> starts,
                              Index batch_size) {
  const auto total = static_cast<Index>(starts.size());
  const Index n = sampler.series().users();
  const Index h = model.config().horizon;
  QuantileForecast out{Tensor({total, h, n}), Tensor({total, h, n}), Tensor({total, h, n})};
  for (Index first = 0; first < total; first += batch_size) {
    const Index count = std::min(batch_size, total - first);
    const auto part = model.forecast(sampler.batch(starts.subspan(static_cast<std::size_t>(first),
                                                                 static_cast<std::size_t>(count))));
    out.low.array().segment(first * h * n, count * h * n) = part.low.array();
    out.median.array().segment(first * h * n, count * h * n) = part.median.array();
    out.high.array().segment(first * h * n, count * h * n) = part.high.array();
  }
  const Scaler& s = sampler.series().scaler;
  for (Tensor* t : {&out.low, &out.median, &out.high}) t->array() = t->array() * s.scale + s.mean;
  return out;
}

}  // namespace quantgrid
