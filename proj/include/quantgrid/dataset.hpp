#pragma once

#include "quantgrid/calendar.hpp"
#include "quantgrid/graphs.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace quantgrid {

/// Invalid user-supplied data; the message names the file and row.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Readings on a fixed time grid for users grouped into regions.
struct EnergyDataset {
  std::vector<Timestamp> timestamps;
  Eigen::MatrixXd readings;  // steps x users, kWh per interval
  NodeSet users;             // micro level, region_of set
  NodeSet regions;           // macro level

  Index steps() const { return static_cast<Index>(timestamps.size()); }
  Index user_count() const { return users.size(); }
  Index region_count() const { return regions.size(); }
  std::chrono::seconds interval() const;
  int steps_per_day() const;
  /// Throws DataError when an invariant is broken.
  void validate() const;
};

struct DatasetFiles {
  std::filesystem::path readings;  // timestamp,user_id,kwh
  std::filesystem::path users;     // user_id,x,y,region_id
  std::filesystem::path regions;   // region_id,x,y

  static DatasetFiles in(const std::filesystem::path& dir) {
    return {dir / "readings.csv", dir / "users.csv", dir / "regions.csv"};
  }
};

EnergyDataset load_csv(const DatasetFiles& files);
void write_csv(const EnergyDataset& data, const DatasetFiles& files);

/// Noise scale multiplier applied from step `at` onwards.
struct NoiseShift {
  Index at = 0;
  double scale = 1.0;
};

struct SyntheticSpec {
  Index users = 20;
  Index regions = 4;
  Index days = 14;
  int steps_per_day = 48;
  double noise = 0.1;
  std::optional<NoiseShift> shift;
  std::uint64_t seed = 0;
  std::string start = "2018-01-01T00:00";

  void validate() const;
};

/// base + daily profile + weekend lift + region effect + Gaussian noise,
/// clipped at zero. Noise is drawn from its own stream so the noiseless
/// signal of a seed is the same for every noise level.
EnergyDataset generate_synthetic(const SyntheticSpec& spec);

/// "%.17g"; round-trips through strtod exactly.
std::string format_double(double v);

}  // namespace quantgrid
