#include "quantgrid/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace quantgrid {

PointMetrics point_metrics(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw std::invalid_argument("point metrics: length mismatch");
  if (y.empty()) throw std::invalid_argument("point metrics: empty input");
  PointMetrics m;
  m.n_points = y.size();
  double abs_sum = 0.0, sq_sum = 0.0, pct_sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - yhat[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
    if (std::abs(y[i]) < kMapeFloor) {
      ++m.n_skipped_mape;
    } else {
      pct_sum += std::abs(e / y[i]);
    }
  }
  const auto n = static_cast<double>(y.size());
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  const std::size_t kept = y.size() - m.n_skipped_mape;
  m.mape = kept > 0 ? pct_sum / static_cast<double>(kept) : std::numeric_limits<double>::quiet_NaN();
  return m;
}

IntervalMetrics interval_metrics(std::span<const double> y, std::span<const double> low,
                                 std::span<const double> high, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (y.size() != low.size() || y.size() != high.size()) throw std::invalid_argument("interval metrics: length mismatch");
  if (y.empty()) throw std::invalid_argument("interval metrics: empty input");
  IntervalMetrics m;
  m.n_points = y.size();
  double width_sum = 0.0, wink_sum = 0.0;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(low[i] <= high[i])) throw std::invalid_argument("interval metrics: low exceeds high");
    const double w = high[i] - low[i];
    width_sum += w;
    double score = w;
    if (y[i] < low[i]) {
      score += 2.0 / alpha * (low[i] - y[i]);
    } else if (y[i] > high[i]) {
      score += 2.0 / alpha * (y[i] - high[i]);
    } else {
      ++covered;
    }
    wink_sum += score;
  }
  const auto n = static_cast<double>(y.size());
  m.mpiw = width_sum / n;
  m.winkler = wink_sum / n;
  m.coverage = static_cast<double>(covered) / n;
  return m;
}

nlohmann::json MetricsReport::to_json() const {
  auto finite_or_null = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"mae", point.mae},
          {"rmse", point.rmse},
          {"mape", finite_or_null(point.mape)},
          {"mpiw", interval.mpiw},
          {"winkler", interval.winkler},
          {"coverage", interval.coverage},
          {"target_met", target_met()},
          {"alpha", alpha},
          {"n_points", point.n_points},
          {"n_skipped_mape", point.n_skipped_mape}};
}

MetricsReport evaluate(std::span<const double> y, std::span<const double> median, std::span<const double> low,
                       std::span<const double> high, double alpha) {
  return {point_metrics(y, median), interval_metrics(y, low, high, alpha), alpha};
}

}  // namespace quantgrid
