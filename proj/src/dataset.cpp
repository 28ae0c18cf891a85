#include "quantgrid/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

namespace quantgrid {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

// Header-addressed CSV reader; rows are numbered from 1 with the header as row 1.
class CsvReader {
 public:
  CsvReader(const std::filesystem::path& path, std::vector<std::string> required) : path_(path), in_(path) {
    if (!in_) throw DataError("cannot open " + path.string());
    std::string header;
    if (!std::getline(in_, header)) throw DataError(path.filename().string() + ": missing header row");
    if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
    const auto names = split_csv_line(header);
    for (const auto& col : required) {
      bool found = false;
      for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == col) {
          columns_.push_back(i);
          found = true;
          break;
        }
      }
      if (!found) throw DataError(path.filename().string() + ": missing column '" + col + "'");
    }
    width_ = names.size();
  }

  /// Next non-empty row as the required columns, in requested order.
  bool next(std::vector<std::string>& out) {
    std::string line;
    while (std::getline(in_, line)) {
      ++row_;
      if (line.empty() || line == "\r") continue;
      const auto fields = split_csv_line(line);
      if (fields.size() != width_) fail("expected " + std::to_string(width_) + " fields");
      out.clear();
      for (std::size_t c : columns_) out.push_back(fields[c]);
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path_.filename().string() + " row " + std::to_string(row_) + ": " + what);
  }

  double number(const std::string& text, const char* what) const {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) {
      fail(std::string("invalid ") + what + " '" + text + "'");
    }
    return v;
  }

  long row() const { return row_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::vector<std::size_t> columns_;
  std::size_t width_ = 0;
  long row_ = 1;
};

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::chrono::seconds EnergyDataset::interval() const {
  if (timestamps.size() < 2) return std::chrono::seconds(86400 / 48);
  return timestamps[1] - timestamps[0];
}

int EnergyDataset::steps_per_day() const {
  const auto secs = interval().count();
  if (secs <= 0 || 86400 % secs != 0) throw DataError("reading interval does not divide a day");
  return static_cast<int>(86400 / secs);
}

void EnergyDataset::validate() const {
  if (timestamps.empty()) throw DataError("dataset has no readings");
  if (readings.rows() != steps() || readings.cols() != user_count()) throw DataError("readings matrix has wrong shape");
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] - timestamps[i - 1] != interval()) {
      throw DataError("timestamps are not on a fixed interval at " + format_timestamp(timestamps[i]));
    }
  }
  if ((readings.array() < 0.0).any() || !readings.allFinite()) throw DataError("readings must be finite and >= 0");
  try {
    regions.validate();
    users.validate(region_count());
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
}

EnergyDataset load_csv(const DatasetFiles& files) {
  EnergyDataset data;
  data.regions.level = GraphLevel::Macro;
  data.users.level = GraphLevel::Micro;

  std::unordered_map<std::string, Index> region_index;
  std::vector<std::array<double, 2>> region_xy;
  {
    CsvReader csv(files.regions, {"region_id", "x", "y"});
    std::vector<std::string> f;
    while (csv.next(f)) {
      if (!region_index.emplace(f[0], static_cast<Index>(data.regions.ids.size())).second) {
        csv.fail("duplicate region id '" + f[0] + "'");
      }
      data.regions.ids.push_back(f[0]);
      region_xy.push_back({csv.number(f[1], "x"), csv.number(f[2], "y")});
    }
  }
  data.regions.coords.resize(static_cast<Index>(region_xy.size()), 2);
  for (std::size_t i = 0; i < region_xy.size(); ++i) {
    data.regions.coords.row(static_cast<Index>(i)) << region_xy[i][0], region_xy[i][1];
  }

  std::unordered_map<std::string, Index> user_index;
  std::vector<std::array<double, 2>> user_xy;
  {
    CsvReader csv(files.users, {"user_id", "x", "y", "region_id"});
    std::vector<std::string> f;
    while (csv.next(f)) {
      if (!user_index.emplace(f[0], static_cast<Index>(data.users.ids.size())).second) {
        csv.fail("duplicate user id '" + f[0] + "'");
      }
      const auto region = region_index.find(f[3]);
      if (region == region_index.end()) csv.fail("unknown region id '" + f[3] + "'");
      data.users.ids.push_back(f[0]);
      user_xy.push_back({csv.number(f[1], "x"), csv.number(f[2], "y")});
      data.users.region_of.push_back(region->second);
    }
  }
  if (user_xy.empty()) throw DataError(files.users.filename().string() + ": no users");
  data.users.coords.resize(static_cast<Index>(user_xy.size()), 2);
  for (std::size_t i = 0; i < user_xy.size(); ++i) {
    data.users.coords.row(static_cast<Index>(i)) << user_xy[i][0], user_xy[i][1];
  }

  const Index n = data.users.size();
  std::vector<std::vector<double>> rows;
  std::vector<char> seen;
  {
    CsvReader csv(files.readings, {"timestamp", "user_id", "kwh"});
    std::vector<std::string> f;
    while (csv.next(f)) {
      Timestamp ts;
      try {
        ts = parse_timestamp(f[0]);
      } catch (const std::invalid_argument&) {
        csv.fail("invalid timestamp '" + f[0] + "'");
      }
      const auto user = user_index.find(f[1]);
      if (user == user_index.end()) csv.fail("unknown user id '" + f[1] + "'");
      const double kwh = csv.number(f[2], "reading");
      if (kwh < 0.0) csv.fail("negative reading " + f[2]);

      if (data.timestamps.empty() || ts > data.timestamps.back()) {
        if (!data.timestamps.empty() && static_cast<Index>(std::count(seen.begin(), seen.end(), 1)) != n) {
          csv.fail("timestamp " + format_timestamp(data.timestamps.back()) + " is missing readings for some users");
        }
        data.timestamps.push_back(ts);
        rows.emplace_back(static_cast<std::size_t>(n), 0.0);
        seen.assign(static_cast<std::size_t>(n), 0);
      } else if (ts < data.timestamps.back()) {
        csv.fail("timestamp " + f[0] + " is earlier than the previous row");
      }
      auto& flag = seen[static_cast<std::size_t>(user->second)];
      if (flag) csv.fail("duplicated timestamp " + f[0] + " for user '" + f[1] + "'");
      flag = 1;
      rows.back()[static_cast<std::size_t>(user->second)] = kwh;
    }
    if (data.timestamps.empty()) throw DataError(files.readings.filename().string() + ": no readings");
    if (static_cast<Index>(std::count(seen.begin(), seen.end(), 1)) != n) {
      throw DataError(files.readings.filename().string() + ": timestamp " + format_timestamp(data.timestamps.back()) +
                      " is missing readings for some users");
    }
  }
  data.readings.resize(static_cast<Index>(rows.size()), n);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (Index u = 0; u < n; ++u) data.readings(static_cast<Index>(t), u) = rows[t][static_cast<std::size_t>(u)];
  }
  for (std::size_t i = 2; i < data.timestamps.size(); ++i) {
    if (data.timestamps[i] - data.timestamps[i - 1] != data.timestamps[1] - data.timestamps[0]) {
      throw DataError(files.readings.filename().string() + ": gap before timestamp " +
                      format_timestamp(data.timestamps[i]));
    }
  }
  data.validate();
  return data;
}

void write_csv(const EnergyDataset& data, const DatasetFiles& files) {
  {
    auto out = open_out(files.regions);
    out << "region_id,x,y\n";
    for (Index r = 0; r < data.region_count(); ++r) {
      out << data.regions.ids[static_cast<std::size_t>(r)] << ',' << format_double(data.regions.coords(r, 0)) << ','
          << format_double(data.regions.coords(r, 1)) << '\n';
    }
  }
  {
    auto out = open_out(files.users);
    out << "user_id,x,y,region_id\n";
    for (Index u = 0; u < data.user_count(); ++u) {
      const auto su = static_cast<std::size_t>(u);
      out << data.users.ids[su] << ',' << format_double(data.users.coords(u, 0)) << ','
          << format_double(data.users.coords(u, 1)) << ','
          << data.regions.ids[static_cast<std::size_t>(data.users.region_of[su])] << '\n';
    }
  }
  auto out = open_out(files.readings);
  out << "timestamp,user_id,kwh\n";
  for (Index t = 0; t < data.steps(); ++t) {
    const std::string ts = format_timestamp(data.timestamps[static_cast<std::size_t>(t)]);
    for (Index u = 0; u < data.user_count(); ++u) {
      out << ts << ',' << data.users.ids[static_cast<std::size_t>(u)] << ',' << format_double(data.readings(t, u))
          << '\n';
    }
  }
}

void SyntheticSpec::validate() const {
  if (regions < 1 || users < regions) throw std::invalid_argument("synthetic spec needs users >= regions >= 1");
  if (days < 1) throw std::invalid_argument("synthetic spec needs at least one day");
  if (steps_per_day <= 0 || 1440 % steps_per_day != 0) {
    throw std::invalid_argument("steps_per_day must evenly divide 1440");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw std::invalid_argument("noise must be finite and >= 0");
  if (shift && (!(shift->scale >= 0.0) || shift->at < 0)) throw std::invalid_argument("invalid noise shift");
}

EnergyDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  using std::numbers::pi;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  EnergyDataset data;
  data.regions.level = GraphLevel::Macro;
  data.users.level = GraphLevel::Micro;
  data.regions.coords.resize(spec.regions, 2);
  std::vector<double> region_offset;
  std::vector<double> region_gain;
  for (Index r = 0; r < spec.regions; ++r) {
    data.regions.ids.push_back("R" + std::to_string(r));
    data.regions.coords.row(r) << 10.0 * unit(rng), 10.0 * unit(rng);
    region_offset.push_back(-0.2 + 0.4 * unit(rng));
    region_gain.push_back(0.8 + 0.4 * unit(rng));
  }

  struct UserProfile {
    double base, amplitude, phase, weekend;
  };
  std::vector<UserProfile> profile;
  data.users.coords.resize(spec.users, 2);
  for (Index u = 0; u < spec.users; ++u) {
    const Index r = u % spec.regions;
    char id[32];
    std::snprintf(id, sizeof id, "U%03ld", static_cast<long>(u));
    data.users.ids.push_back(id);
    data.users.region_of.push_back(r);
    data.users.coords.row(u) << data.regions.coords(r, 0) + 0.8 * normal(rng),
        data.regions.coords(r, 1) + 0.8 * normal(rng);
    profile.push_back({1.5 + unit(rng), 0.4 + 0.5 * unit(rng), 0.25 * normal(rng), 0.05 + 0.2 * unit(rng)});
  }

  const Timestamp start = parse_timestamp(spec.start);
  const Index steps = spec.days * spec.steps_per_day;
  const std::chrono::seconds interval(86400 / spec.steps_per_day);
  data.readings.resize(steps, spec.users);

  std::mt19937_64 noise_rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise_normal(0.0, 1.0);
  for (Index t = 0; t < steps; ++t) {
    const Timestamp ts = start + interval * t;
    data.timestamps.push_back(ts);
    const TemporalIndex cal = temporal_index(ts, spec.steps_per_day);
    const double day_frac = static_cast<double>(cal.time_of_day) / spec.steps_per_day;
    const bool weekend = cal.day_of_week >= 5;
    const double scale = (spec.shift && t >= spec.shift->at) ? spec.shift->scale : 1.0;
    for (Index u = 0; u < spec.users; ++u) {
      const auto& p = profile[static_cast<std::size_t>(u)];
      const auto r = static_cast<std::size_t>(data.users.region_of[static_cast<std::size_t>(u)]);
      const double daily = 0.6 * std::sin(2.0 * pi * day_frac - pi / 2.0 + p.phase) +
                           0.4 * std::sin(4.0 * pi * day_frac + p.phase);
      const double clean =
          p.base + region_offset[r] + region_gain[r] * p.amplitude * daily + (weekend ? p.weekend * p.base : 0.0);
      const double z = noise_normal(noise_rng);
      data.readings(t, u) = std::max(0.0, clean + spec.noise * scale * z);
    }
  }
  return data;
}

}  // namespace quantgrid
