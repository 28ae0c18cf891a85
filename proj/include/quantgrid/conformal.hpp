#pragma once

// Sequential conformalized quantile regression.
//
// Calibration scores live in a FIFO window. Each emitted interval widens the
// model's (low, high) band by the conformal quantile of the window; once the
// observation is revealed its score replaces the oldest one.

#include "quantgrid/calendar.hpp"
#include "quantgrid/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace quantgrid {

/// max(q_lo - y, y - q_up). Negative when y lies strictly inside.
double nonconformity(double q_lo, double q_up, double y);

/// Fixed-capacity FIFO of scores, oldest first.
class NonconformityWindow {
 public:
  NonconformityWindow() = default;
  explicit NonconformityWindow(std::vector<double> scores);

  /// Pops the oldest score and appends `score`.
  void update(double score);

  std::size_t size() const { return scores_.size(); }
  std::size_t capacity() const { return scores_.size(); }
  bool empty() const { return scores_.empty(); }
  std::vector<double> scores() const { return {scores_.begin(), scores_.end()}; }
  double operator[](std::size_t i) const { return scores_[i]; }

 private:
  std::deque<double> scores_;
};

/// 1-based rank ceil((1 - alpha)(n + 1)) of the conformal order statistic.
/// May exceed n when the window is too small for alpha.
std::size_t conformal_rank(std::size_t n, double alpha);

struct ConformalQuantile {
  double value = 0.0;
  bool window_too_small = false;  // rank > n, value is the maximum score
};

ConformalQuantile conformal_quantile(std::span<const double> scores, double alpha);
ConformalQuantile conformal_quantile(const NonconformityWindow& window, double alpha);

struct PredictionInterval {
  double low = 0.0;
  double high = 0.0;
  bool clamped = false;  // Q would have inverted the band; collapsed to the midpoint
};

/// [q_lo - Q, q_up + Q].
PredictionInterval construct_interval(double q_lo, double q_up, double q);

/// Scores of aligned calibration predictions in the given (time) order.
NonconformityWindow calibrate(std::span<const double> q_lo, std::span<const double> q_up,
                              std::span<const double> y);

enum class UpdateMode { Rolling, Static };

struct StreamItem {
  Timestamp time;
  Index user = 0;  // window key when windows are per user
  double q_lo = 0.0;
  double q_up = 0.0;
  std::optional<double> y;  // revealed observation; none means no update
};

struct StreamOutput {
  PredictionInterval interval;
  double q = 0.0;
  bool window_too_small = false;
};

/// Runs Algorithm-1 style calibration over a stream. Items sharing a
/// timestamp form one step: every interval of the step is emitted from the
/// current window(s) before any of the step's scores is pushed.
class ScqrStream {
 public:
  /// One global window.
  ScqrStream(NonconformityWindow window, double alpha, UpdateMode mode = UpdateMode::Rolling);
  /// One window per user, indexed by StreamItem::user.
  ScqrStream(std::vector<NonconformityWindow> per_user, double alpha, UpdateMode mode = UpdateMode::Rolling);

  std::vector<StreamOutput> process(std::span<const StreamItem> items);

  double alpha() const { return alpha_; }
  UpdateMode mode() const { return mode_; }
  bool per_user() const { return per_user_; }
  const std::vector<NonconformityWindow>& windows() const { return windows_; }
  /// Completed steps (timestamps).
  long cursor() const { return cursor_; }
  std::optional<Timestamp> last_time() const { return last_time_; }

  nlohmann::json to_json() const;
  static ScqrStream from_json(const nlohmann::json& j);

 private:
  NonconformityWindow& window_for(Index user);
  void run_step(std::span<const StreamItem> step, std::vector<StreamOutput>& out);

  std::vector<NonconformityWindow> windows_;
  double alpha_;
  UpdateMode mode_;
  bool per_user_;
  long cursor_ = 0;
  std::optional<Timestamp> last_time_;
};

}  // namespace quantgrid
