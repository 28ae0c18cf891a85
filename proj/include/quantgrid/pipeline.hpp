#pragma once

#include "quantgrid/conformal.hpp"
#include "quantgrid/dataset.hpp"
#include "quantgrid/metrics.hpp"
#include "quantgrid/model.hpp"
#include "quantgrid/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace quantgrid {

/// Bad input from the person running a command (exit status 1).
class UserError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  double alpha = 0.1;
  std::string output_dir = "runs/quantgrid";

  struct Data {
    std::string dir;  // empty: <output_dir>/data
    Index users = 20;
    Index regions = 4;
    Index days = 14;
    int steps_per_day = 48;
    double noise = 0.1;
    Index shift_at = -1;  // step index of the noise shift, -1 for none
    double shift_scale = 1.0;
    std::string start = "2018-01-01T00:00";
  } data;

  struct GraphParams {
    double sigma2 = 4.0;
    double threshold = 0.1;
    int diffusion_order = 2;
    double macro_sigma2 = 25.0;
    double macro_threshold = 0.1;
  } graph;

  struct ModelDims {
    Index spatial_dim = 8;
    Index tod_dim = 8;
    Index dow_dim = 4;
    Index moy_dim = 4;
    Index hidden = 8;
    Index pool_width = 16;
    Index pool_blocks = 4;
    bool blockwise = false;
    std::string similarity = "cosine";
  } model;

  TrainConfig train;

  struct SplitFractions {
    double train = 0.6;
    double calibration = 0.2;
    double test = 0.2;
  } split;

  bool per_user_windows = false;

  struct Ablation {
    bool disable_macro = false;
    bool disable_pools = false;
    bool static_cqr = false;
  } ablation;

  void validate() const;
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);

  SyntheticSpec synthetic() const;
  ModelConfig model_config(Index nodes, int steps_per_day) const;
};

/// Defaults, then the optional JSON file, then "dotted.key=value" overrides.
/// Values are parsed as JSON when possible and as strings otherwise. Unknown
/// keys are rejected. QUANTGRID_OUTPUT_DIR, when set, replaces output_dir.
PipelineConfig resolve_config(const std::optional<std::filesystem::path>& file, std::span<const std::string> overrides);

struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path data;
  std::filesystem::path config;        // config.json
  std::filesystem::path model;         // model.json
  std::filesystem::path trace;         // train_trace.jsonl
  std::filesystem::path calibration;   // calibration.json
  std::filesystem::path intervals;     // intervals.csv
  std::filesystem::path stream_state;  // stream_state.json
  std::filesystem::path report;        // report.json

  static RunPaths of(const PipelineConfig& cfg);
};

/// Dataset turned into model inputs: standardized load, regional context,
/// calendar indices, user graph and the chronological split.
struct PreparedData {
  EnergyDataset data;
  PreparedSeries series;
  DiffusionOperator diffusion;
  Split split;
};

/// Regional context per user: region means smoothed one hop over the macro
/// graph, broadcast back to member users (kWh).
Eigen::MatrixXd macro_feature(const EnergyDataset& data, double sigma2, double threshold);

/// The scaler is fitted on the training rows unless one is given.
PreparedData prepare(EnergyDataset data, const PipelineConfig& cfg, const std::optional<Scaler>& scaler = std::nullopt);

struct TrainSummary {
  TrainResult result;
  Index parameter_count = 0;
  Index samples = 0;
};

// Commands. Each one reads and writes the artifacts named by RunPaths.
EnergyDataset command_generate(const PipelineConfig& cfg);
TrainSummary command_train(const PipelineConfig& cfg);
ScqrStream command_calibrate(const PipelineConfig& cfg);
struct PredictSummary {
  std::size_t rows = 0;
  std::size_t window_too_small = 0;  // intervals whose window was too small for alpha
  std::size_t clamped = 0;
};
PredictSummary command_predict(const PipelineConfig& cfg);
MetricsReport command_evaluate(const PipelineConfig& cfg);
MetricsReport command_e2e(const PipelineConfig& cfg);

/// Runs a verb, printing a one-line JSON summary to `out` or a one-line JSON
/// error to `err`. Returns the exit status: 0 ok, 1 user error, 2 internal.
int run_command(const std::string& verb, const PipelineConfig& cfg, std::ostream& out, std::ostream& err);

/// One row of intervals.csv.
struct IntervalRow {
  Timestamp time;
  std::string user;
  double low = 0.0;
  double median = 0.0;
  double high = 0.0;
  std::optional<double> y;
};

std::vector<IntervalRow> read_intervals(const std::filesystem::path& path);
void write_intervals(const std::filesystem::path& path, std::span<const IntervalRow> rows);

}  // namespace quantgrid
