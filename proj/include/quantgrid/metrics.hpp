#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <span>

namespace quantgrid {

/// Entries with |y| below this are left out of MAPE.
inline constexpr double kMapeFloor = 1e-8;

struct PointMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // fraction; NaN when every entry was skipped
  std::size_t n_points = 0;
  std::size_t n_skipped_mape = 0;
};

struct IntervalMetrics {
  double mpiw = 0.0;
  double winkler = 0.0;
  double coverage = 0.0;
  std::size_t n_points = 0;
};

PointMetrics point_metrics(std::span<const double> y, std::span<const double> yhat);

/// Winkler per point: width, plus (2/alpha) times the distance to the
/// violated bound when y falls outside.
IntervalMetrics interval_metrics(std::span<const double> y, std::span<const double> low,
                                 std::span<const double> high, double alpha);

struct MetricsReport {
  PointMetrics point;
  IntervalMetrics interval;
  double alpha = 0.1;

  bool target_met() const { return interval.coverage >= 1.0 - alpha; }
  nlohmann::json to_json() const;
};

MetricsReport evaluate(std::span<const double> y, std::span<const double> median, std::span<const double> low,
                       std::span<const double> high, double alpha);

}  // namespace quantgrid
