#include "quantgrid/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace quantgrid {

namespace {

void require_finite(std::initializer_list<double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
}

// swap crossed quantiles
std::pair<double, double> repaired(double q_lo, double q_up) {
  return q_lo <= q_up ? std::pair{q_lo, q_up} : std::pair{q_up, q_lo};
}

}  // namespace

double nonconformity(double q_lo, double q_up, double y) {
  require_finite({q_lo, q_up, y}, "nonconformity");
  return std::max(q_lo - y, y - q_up);
}

NonconformityWindow::NonconformityWindow(std::vector<double> scores) : scores_(scores.begin(), scores.end()) {
  for (double s : scores_) require_finite({s}, "nonconformity window");
}

void NonconformityWindow::update(double score) {
  if (scores_.empty()) throw std::logic_error("cannot update an empty nonconformity window");
  require_finite({score}, "nonconformity window");
  scores_.pop_front();
  scores_.push_back(score);
}

std::size_t conformal_rank(std::size_t n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (n == 0) throw std::invalid_argument("conformal quantile of an empty window");
  // (1 - alpha)(1 + 1/n) * n, computed without the division. The small
  // slack keeps exact products such as 0.9 * 100 from rounding up a rank.
  const double x = (1.0 - alpha) * static_cast<double>(n + 1);
  const auto k = static_cast<std::size_t>(std::ceil(x - 1e-9));
  return std::max<std::size_t>(k, 1);
}

ConformalQuantile conformal_quantile(std::span<const double> scores, double alpha) {
  const std::size_t k = conformal_rank(scores.size(), alpha);
  std::vector<double> work(scores.begin(), scores.end());
  if (k > work.size()) return {*std::max_element(work.begin(), work.end()), true};
  auto nth = work.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(work.begin(), nth, work.end());
  return {*nth, false};
}

ConformalQuantile conformal_quantile(const NonconformityWindow& window, double alpha) {
  const auto scores = window.scores();
  return conformal_quantile(std::span<const double>(scores), alpha);
}

PredictionInterval construct_interval(double q_lo, double q_up, double q) {
  require_finite({q_lo, q_up, q}, "construct_interval");
  std::tie(q_lo, q_up) = repaired(q_lo, q_up);
  if (q < -(q_up - q_lo) / 2.0) {
    const double mid = q_lo + (q_up - q_lo) / 2.0;
    return {mid, mid, true};
  }
  return {q_lo - q, q_up + q, false};
}

NonconformityWindow calibrate(std::span<const double> q_lo, std::span<const double> q_up, std::span<const double> y) {
  if (q_lo.size() != q_up.size() || q_lo.size() != y.size()) {
    throw std::invalid_argument("calibration predictions and targets differ in length");
  }
  if (y.empty()) throw std::invalid_argument("calibration set is empty");
  std::vector<double> scores(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto [lo, up] = repaired(q_lo[i], q_up[i]);
    scores[i] = nonconformity(lo, up, y[i]);
  }
  return NonconformityWindow(std::move(scores));
}

ScqrStream::ScqrStream(NonconformityWindow window, double alpha, UpdateMode mode)
    : alpha_(alpha), mode_(mode), per_user_(false) {
  if (window.empty()) throw std::invalid_argument("calibration window is empty");
  conformal_rank(window.size(), alpha);  // validates alpha
  windows_.push_back(std::move(window));
}

ScqrStream::ScqrStream(std::vector<NonconformityWindow> per_user, double alpha, UpdateMode mode)
    : windows_(std::move(per_user)), alpha_(alpha), mode_(mode), per_user_(true) {
  if (windows_.empty()) throw std::invalid_argument("no per-user windows");
  for (const auto& w : windows_) {
    if (w.empty()) throw std::invalid_argument("calibration window is empty");
  }
  conformal_rank(1, alpha);
}

NonconformityWindow& ScqrStream::window_for(Index user) {
  if (!per_user_) return windows_.front();
  if (user < 0 || user >= static_cast<Index>(windows_.size())) {
    throw std::out_of_range("stream user " + std::to_string(user) + " has no window");
  }
  return windows_[static_cast<std::size_t>(user)];
}

void ScqrStream::run_step(std::span<const StreamItem> step, std::vector<StreamOutput>& out) {
  // every Q of this step comes from the pre-step windows
  std::vector<ConformalQuantile> q(windows_.size());
  std::vector<bool> known(windows_.size(), false);
  for (const auto& item : step) {
    const auto key = per_user_ ? static_cast<std::size_t>(item.user) : 0;
    NonconformityWindow& w = window_for(item.user);
    if (!known[key]) {
      q[key] = conformal_quantile(w, alpha_);
      known[key] = true;
    }
    const auto [lo, up] = repaired(item.q_lo, item.q_up);
    out.push_back({construct_interval(lo, up, q[key].value), q[key].value, q[key].window_too_small});
  }
  if (mode_ == UpdateMode::Static) return;
  for (const auto& item : step) {
    if (!item.y) continue;
    const auto [lo, up] = repaired(item.q_lo, item.q_up);
    window_for(item.user).update(nonconformity(lo, up, *item.y));
  }
}

std::vector<StreamOutput> ScqrStream::process(std::span<const StreamItem> items) {
  std::vector<StreamOutput> out;
  out.reserve(items.size());
  std::size_t first = 0;
  while (first < items.size()) {
    const Timestamp t = items[first].time;
    if (last_time_ && t <= *last_time_) {
      throw std::invalid_argument("stream timestamp " + format_timestamp(t) + " is not after " +
                                  format_timestamp(*last_time_));
    }
    std::size_t last = first;
    while (last < items.size() && items[last].time == t) ++last;
    run_step(items.subspan(first, last - first), out);
    last_time_ = t;
    ++cursor_;
    first = last;
  }
  return out;
}

nlohmann::json ScqrStream::to_json() const {
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& w : windows_) windows.push_back(w.scores());
  nlohmann::json j{{"format", "quantgrid-scqr"},
                   {"version", 1},
                   {"alpha", alpha_},
                   {"mode", mode_ == UpdateMode::Rolling ? "rolling" : "static"},
                   {"per_user", per_user_},
                   {"cursor", cursor_},
                   {"windows", std::move(windows)}};
  j["last_time"] = last_time_ ? nlohmann::json(format_timestamp(*last_time_)) : nlohmann::json(nullptr);
  return j;
}

ScqrStream ScqrStream::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "quantgrid-scqr") throw std::invalid_argument("not a calibration checkpoint");
  const double alpha = j.at("alpha").get<double>();
  const std::string mode_name = j.at("mode").get<std::string>();
  if (mode_name != "rolling" && mode_name != "static") throw std::invalid_argument("unknown stream mode " + mode_name);
  const UpdateMode mode = mode_name == "rolling" ? UpdateMode::Rolling : UpdateMode::Static;

  std::vector<NonconformityWindow> windows;
  for (const auto& w : j.at("windows")) windows.emplace_back(w.get<std::vector<double>>());
  const bool per_user = j.at("per_user").get<bool>();
  if (!per_user && windows.size() != 1) throw std::invalid_argument("global stream needs exactly one window");

  ScqrStream s = per_user ? ScqrStream(std::move(windows), alpha, mode)
                          : ScqrStream(std::move(windows.front()), alpha, mode);
  s.cursor_ = j.at("cursor").get<long>();
  if (!j.at("last_time").is_null()) s.last_time_ = parse_timestamp(j.at("last_time").get<std::string>());
  return s;
}

}  // namespace quantgrid
