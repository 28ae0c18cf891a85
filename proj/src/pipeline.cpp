#include "quantgrid/pipeline.hpp"

#include "quantgrid/checkpoint.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace quantgrid {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

void PipelineConfig::validate() const {
  auto positive = [](double v, const char* key) {
    if (!(v > 0.0)) throw UserError(std::string(key) + " must be positive");
  };
  if (!(alpha > 0.0 && alpha < 1.0)) throw UserError("alpha must lie in (0, 1)");
  if (output_dir.empty()) throw UserError("output_dir must not be empty");
  positive(static_cast<double>(data.users), "data.users");
  positive(static_cast<double>(data.regions), "data.regions");
  positive(static_cast<double>(data.days), "data.days");
  positive(data.steps_per_day, "data.steps_per_day");
  if (data.noise < 0.0) throw UserError("data.noise must be non-negative");
  positive(data.shift_scale, "data.shift_scale");
  positive(graph.sigma2, "graph.sigma2");
  positive(graph.macro_sigma2, "graph.macro_sigma2");
  if (!(graph.threshold >= 0.0 && graph.threshold <= 1.0)) throw UserError("graph.threshold must lie in [0, 1]");
  if (!(graph.macro_threshold >= 0.0 && graph.macro_threshold <= 1.0)) {
    throw UserError("graph.macro_threshold must lie in [0, 1]");
  }
  if (graph.diffusion_order < 0) throw UserError("graph.diffusion_order must be non-negative");
  for (auto [v, key] : {std::pair{model.spatial_dim, "model.spatial_dim"}, {model.tod_dim, "model.tod_dim"},
                        {model.dow_dim, "model.dow_dim"}, {model.moy_dim, "model.moy_dim"},
                        {model.hidden, "model.hidden"}, {model.pool_width, "model.pool_width"},
                        {model.pool_blocks, "model.pool_blocks"}}) {
    positive(static_cast<double>(v), key);
  }
  if (model.similarity != "cosine" && model.similarity != "dot") {
    throw UserError("model.similarity must be \"cosine\" or \"dot\"");
  }
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw UserError(e.what());
  }
  if (train.epochs < 1) throw UserError("train.epochs must be positive");
  positive(split.train, "split.train");
  positive(split.calibration, "split.calibration");
  positive(split.test, "split.test");
  if (std::abs(split.train + split.calibration + split.test - 1.0) > 1e-9) {
    throw UserError("split fractions must sum to 1");
  }
}

json PipelineConfig::to_json() const {
  return {{"seed", seed},
          {"alpha", alpha},
          {"output_dir", output_dir},
          {"data",
           {{"dir", data.dir},
            {"users", data.users},
            {"regions", data.regions},
            {"days", data.days},
            {"steps_per_day", data.steps_per_day},
            {"noise", data.noise},
            {"shift_at", data.shift_at},
            {"shift_scale", data.shift_scale},
            {"start", data.start}}},
          {"graph",
           {{"sigma2", graph.sigma2},
            {"threshold", graph.threshold},
            {"diffusion_order", graph.diffusion_order},
            {"macro_sigma2", graph.macro_sigma2},
            {"macro_threshold", graph.macro_threshold}}},
          {"model",
           {{"spatial_dim", model.spatial_dim},
            {"tod_dim", model.tod_dim},
            {"dow_dim", model.dow_dim},
            {"moy_dim", model.moy_dim},
            {"hidden", model.hidden},
            {"pool_width", model.pool_width},
            {"pool_blocks", model.pool_blocks},
            {"blockwise", model.blockwise},
            {"similarity", model.similarity}}},
          {"train",
           {{"epochs", train.epochs},
            {"batch_size", train.batch_size},
            {"learning_rate", train.adam.learning_rate},
            {"beta1", train.adam.beta1},
            {"beta2", train.adam.beta2},
            {"epsilon", train.adam.epsilon},
            {"clip_norm", train.adam.clip_norm},
            {"window", train.window},
            {"horizon", train.horizon}}},
          {"split", {{"train", split.train}, {"calibration", split.calibration}, {"test", split.test}}},
          {"per_user_windows", per_user_windows},
          {"ablation",
           {{"disable_macro", ablation.disable_macro},
            {"disable_pools", ablation.disable_pools},
            {"static_cqr", ablation.static_cqr}}}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.alpha = j.at("alpha").get<double>();
    c.output_dir = j.at("output_dir").get<std::string>();

    const auto& d = j.at("data");
    c.data.dir = d.at("dir").get<std::string>();
    c.data.users = d.at("users").get<Index>();
    c.data.regions = d.at("regions").get<Index>();
    c.data.days = d.at("days").get<Index>();
    c.data.steps_per_day = d.at("steps_per_day").get<int>();
    c.data.noise = d.at("noise").get<double>();
    c.data.shift_at = d.at("shift_at").get<Index>();
    c.data.shift_scale = d.at("shift_scale").get<double>();
    c.data.start = d.at("start").get<std::string>();

    const auto& g = j.at("graph");
    c.graph.sigma2 = g.at("sigma2").get<double>();
    c.graph.threshold = g.at("threshold").get<double>();
    c.graph.diffusion_order = g.at("diffusion_order").get<int>();
    c.graph.macro_sigma2 = g.at("macro_sigma2").get<double>();
    c.graph.macro_threshold = g.at("macro_threshold").get<double>();

    const auto& m = j.at("model");
    c.model.spatial_dim = m.at("spatial_dim").get<Index>();
    c.model.tod_dim = m.at("tod_dim").get<Index>();
    c.model.dow_dim = m.at("dow_dim").get<Index>();
    c.model.moy_dim = m.at("moy_dim").get<Index>();
    c.model.hidden = m.at("hidden").get<Index>();
    c.model.pool_width = m.at("pool_width").get<Index>();
    c.model.pool_blocks = m.at("pool_blocks").get<Index>();
    c.model.blockwise = m.at("blockwise").get<bool>();
    c.model.similarity = m.at("similarity").get<std::string>();

    const auto& t = j.at("train");
    c.train.epochs = t.at("epochs").get<int>();
    c.train.batch_size = t.at("batch_size").get<Index>();
    c.train.adam.learning_rate = t.at("learning_rate").get<double>();
    c.train.adam.beta1 = t.at("beta1").get<double>();
    c.train.adam.beta2 = t.at("beta2").get<double>();
    c.train.adam.epsilon = t.at("epsilon").get<double>();
    c.train.adam.clip_norm = t.at("clip_norm").get<double>();
    c.train.window = t.at("window").get<Index>();
    c.train.horizon = t.at("horizon").get<Index>();

    const auto& s = j.at("split");
    c.split.train = s.at("train").get<double>();
    c.split.calibration = s.at("calibration").get<double>();
    c.split.test = s.at("test").get<double>();

    c.per_user_windows = j.at("per_user_windows").get<bool>();
    const auto& a = j.at("ablation");
    c.ablation.disable_macro = a.at("disable_macro").get<bool>();
    c.ablation.disable_pools = a.at("disable_pools").get<bool>();
    c.ablation.static_cqr = a.at("static_cqr").get<bool>();
  } catch (const json::exception& e) {
    throw UserError(std::string("config: ") + e.what());
  }
  c.train.seed = c.seed;
  c.validate();
  return c;
}

SyntheticSpec PipelineConfig::synthetic() const {
  SyntheticSpec s;
  s.users = data.users;
  s.regions = data.regions;
  s.days = data.days;
  s.steps_per_day = data.steps_per_day;
  s.noise = data.noise;
  if (data.shift_at >= 0) s.shift = NoiseShift{data.shift_at, data.shift_scale};
  s.seed = seed;
  s.start = data.start;
  return s;
}

ModelConfig PipelineConfig::model_config(Index nodes, int steps_per_day) const {
  ModelConfig m;
  m.nodes = nodes;
  m.input_channels = 2;
  m.spatial_dim = model.spatial_dim;
  m.tod_dim = model.tod_dim;
  m.dow_dim = model.dow_dim;
  m.moy_dim = model.moy_dim;
  m.steps_per_day = steps_per_day;
  m.hidden = model.hidden;
  m.diffusion_order = graph.diffusion_order;
  m.pool_width = model.pool_width;
  m.pool_blocks = model.pool_blocks;
  m.horizon = train.horizon;
  m.use_pools = !ablation.disable_pools;
  m.blockwise = model.blockwise;
  m.similarity = model.similarity == "dot" ? Similarity::Dot : Similarity::Cosine;
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw UserError(e.what());
  }
  return m;
}

namespace {

void reject_unknown(const json& defaults, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw UserError("config" + (prefix.empty() ? "" : " key " + prefix) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw UserError("unknown config key '" + path + "'");
    if (defaults.at(key).is_object()) reject_unknown(defaults.at(key), value, path);
  }
}

}  // namespace

PipelineConfig resolve_config(const std::optional<fs::path>& file, std::span<const std::string> overrides) {
  json j = PipelineConfig{}.to_json();
  if (file) {
    if (!fs::exists(*file)) throw UserError("config file not found: " + file->string());
    json patch;
    try {
      patch = read_json(*file);
    } catch (const std::invalid_argument& e) {
      throw UserError(e.what());
    }
    reject_unknown(j, patch, "");
    j.merge_patch(patch);
  }
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UserError("override '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);

    json* node = &j;
    std::stringstream parts(key);
    std::string part;
    while (std::getline(parts, part, '.')) {
      if (!node->is_object() || !node->contains(part)) throw UserError("unknown config key '" + key + "'");
      node = &(*node)[part];
    }
    if (node->is_object()) throw UserError("config key '" + key + "' is a section");
    if (node->is_string()) {
      *node = text;
    } else {
      json value = json::parse(text, nullptr, false);
      if (value.is_discarded()) throw UserError("cannot parse value of '" + key + "': " + text);
      *node = std::move(value);
    }
  }
  if (const char* env = std::getenv("QUANTGRID_OUTPUT_DIR"); env && *env) j["output_dir"] = env;
  return PipelineConfig::from_json(j);
}

RunPaths RunPaths::of(const PipelineConfig& cfg) {
  RunPaths p;
  p.root = cfg.output_dir;
  p.data = cfg.data.dir.empty() ? p.root / "data" : fs::path(cfg.data.dir);
  p.config = p.root / "config.json";
  p.model = p.root / "model.json";
  p.trace = p.root / "train_trace.jsonl";
  p.calibration = p.root / "calibration.json";
  p.intervals = p.root / "intervals.csv";
  p.stream_state = p.root / "stream_state.json";
  p.report = p.root / "report.json";
  return p;
}

// ---------------------------------------------------------------- data

Eigen::MatrixXd macro_feature(const EnergyDataset& data, double sigma2, double threshold) {
  const Eigen::MatrixXd regional = region_mean(data.readings, data.users.region_of, data.region_count());
  const Eigen::MatrixXd transition = normalize(build_adjacency(data.regions, sigma2, threshold));
  // row t of the result is P applied to the regional vector at t
  const Eigen::MatrixXd smoothed = regional * transition.transpose();
  return broadcast_to_users(smoothed, data.users.region_of);
}

PreparedData prepare(EnergyDataset data, const PipelineConfig& cfg, const std::optional<Scaler>& scaler) {
  PreparedData p;
  const Index steps = data.steps();
  const Index usable = steps - cfg.train.window;
  if (usable < 3) {
    throw UserError("dataset of " + std::to_string(steps) + " steps is shorter than the input window");
  }
  try {
    // split over target steps; the first window steps only serve as history
    const Split over_targets = Split::chronological(usable, cfg.split.train, cfg.split.calibration);
    p.split = {over_targets.train_end + cfg.train.window, over_targets.calibration_end + cfg.train.window, steps};
  } catch (const std::invalid_argument& e) {
    throw UserError(e.what());
  }

  const int spd = data.steps_per_day();
  p.series.scaler = scaler ? *scaler : Scaler::fit(data.readings.topRows(p.split.train_end));
  const Scaler& s = p.series.scaler;
  p.series.load = (data.readings.array() - s.mean) / s.scale;
  if (cfg.ablation.disable_macro) {
    p.series.macro = Eigen::MatrixXd::Zero(steps, data.user_count());
  } else {
    p.series.macro = (macro_feature(data, cfg.graph.macro_sigma2, cfg.graph.macro_threshold).array() - s.mean) / s.scale;
  }
  p.series.time.reserve(static_cast<std::size_t>(steps));
  for (const Timestamp t : data.timestamps) p.series.time.push_back(temporal_index(t, spd));

  p.diffusion = diffusion_powers(normalize(build_adjacency(data.users, cfg.graph.sigma2, cfg.graph.threshold)),
                                 cfg.graph.diffusion_order);
  p.data = std::move(data);
  return p;
}

namespace {

EnergyDataset load_data(const RunPaths& paths) {
  const auto files = DatasetFiles::in(paths.data);
  for (const auto& f : {files.readings, files.users, files.regions}) {
    if (!fs::exists(f)) throw UserError("missing input file: " + f.string());
  }
  return load_csv(files);
}

struct Trained {
  PipelineConfig config;  // as used for training
  PreparedData prep;
  Model model;
};

Trained load_trained(const RunPaths& paths) {
  if (!fs::exists(paths.model)) throw UserError("checkpoint not found: " + paths.model.string());
  ModelCheckpoint ck;
  try {
    ck = load_checkpoint(paths.model);
  } catch (const std::invalid_argument& e) {
    throw UserError(paths.model.string() + ": " + e.what());
  }
  if (!ck.extra.contains("pipeline")) throw UserError(paths.model.string() + ": checkpoint lacks its pipeline config");
  PipelineConfig trained = PipelineConfig::from_json(ck.extra.at("pipeline"));
  PreparedData prep = prepare(load_data(paths), trained, ck.scaler);
  if (prep.data.user_count() != ck.config.nodes) {
    throw UserError("dataset has " + std::to_string(prep.data.user_count()) + " users, checkpoint was trained on " +
                    std::to_string(ck.config.nodes));
  }
  Model model(ck.config, prep.diffusion, trained.seed);
  restore(model, ck);
  return {std::move(trained), std::move(prep), std::move(model)};
}

// horizon-1 value of sample b, user u in a [B, H, N] tensor
double first_step(const Tensor& t, Index b, Index u) { return t.data()[(b * t.dim(1)) * t.dim(2) + u]; }

}  // namespace

// ---------------------------------------------------------------- intervals csv

void write_intervals(const fs::path& path, std::span<const IntervalRow> rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "timestamp,user_id,low,median,high,y_true\n";
  for (const auto& r : rows) {
    out << format_timestamp(r.time) << ',' << r.user << ',' << format_double(r.low) << ',' << format_double(r.median)
        << ',' << format_double(r.high) << ',' << (r.y ? format_double(*r.y) : std::string()) << '\n';
  }
}

std::vector<IntervalRow> read_intervals(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("intervals not found: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw UserError(path.string() + ": missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const bool with_y = line == "timestamp,user_id,low,median,high,y_true";
  if (!with_y && line != "timestamp,user_id,low,median,high") {
    throw UserError(path.string() + ": unexpected header '" + line + "'");
  }
  std::vector<IntervalRow> rows;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    const std::size_t width = with_y ? 6 : 5;
    const auto fail = [&](const std::string& msg) {
      throw UserError(path.filename().string() + " row " + std::to_string(row) + ": " + msg);
    };
    if (f.size() != width) fail("expected " + std::to_string(width) + " fields");
    auto number = [&](const std::string& s) {
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (s.empty() || *end != '\0') fail("bad number '" + s + "'");
      return v;
    };
    IntervalRow r;
    try {
      r.time = parse_timestamp(f[0]);
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    r.user = f[1];
    r.low = number(f[2]);
    r.median = number(f[3]);
    r.high = number(f[4]);
    if (with_y && !f[5].empty()) r.y = number(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------- commands

EnergyDataset command_generate(const PipelineConfig& cfg) {
  const RunPaths paths = RunPaths::of(cfg);
  write_json(paths.config, cfg.to_json());
  EnergyDataset data;
  try {
    data = generate_synthetic(cfg.synthetic());
  } catch (const std::invalid_argument& e) {
    throw UserError(e.what());
  }
  fs::create_directories(paths.data);
  write_csv(data, DatasetFiles::in(paths.data));
  return data;
}

TrainSummary command_train(const PipelineConfig& cfg) {
  const RunPaths paths = RunPaths::of(cfg);
  write_json(paths.config, cfg.to_json());
  const PreparedData prep = prepare(load_data(paths), cfg);
  Model model(cfg.model_config(prep.data.user_count(), prep.data.steps_per_day()), prep.diffusion, cfg.seed);

  const WindowSampler sampler(prep.series, cfg.train.window, cfg.train.horizon);
  const auto starts = sampler.full_windows(0, prep.split.train_end);
  if (starts.empty()) throw UserError("training split holds no complete window");

  std::ofstream trace(paths.trace);
  if (!trace) throw std::runtime_error("cannot write " + paths.trace.string());
  TrainSummary summary;
  summary.result = train(model, sampler, starts, cfg.train, LossConfig{cfg.alpha}, &trace);
  summary.parameter_count = model.parameter_count();
  summary.samples = static_cast<Index>(starts.size());

  save_checkpoint(paths.model, make_checkpoint(model, prep.series.scaler,
                                               {{"pipeline", cfg.to_json()},
                                                {"epoch_loss", summary.result.epoch_loss},
                                                {"steps", summary.result.steps}}));
  return summary;
}

ScqrStream command_calibrate(const PipelineConfig& cfg) {
  const RunPaths paths = RunPaths::of(cfg);
  write_json(paths.config, cfg.to_json());
  Trained t = load_trained(paths);
  const WindowSampler sampler(t.prep.series, t.config.train.window, t.config.train.horizon);
  const auto starts = sampler.forecast_starts(t.prep.split.train_end, t.prep.split.calibration_end);
  const auto fc = forecast_kwh(t.model, sampler, starts);
  const Index users = t.prep.data.user_count();

  // time-major, users in dataset order
  std::vector<std::vector<double>> lo(static_cast<std::size_t>(users)), up(lo), y(lo);
  for (std::size_t b = 0; b < starts.size(); ++b) {
    for (Index u = 0; u < users; ++u) {
      const auto k = static_cast<std::size_t>(u);
      lo[k].push_back(first_step(fc.low, static_cast<Index>(b), u));
      up[k].push_back(first_step(fc.high, static_cast<Index>(b), u));
      y[k].push_back(t.prep.data.readings(starts[b], u));
    }
  }

  auto stream = [&] {
    if (cfg.per_user_windows) {
      std::vector<NonconformityWindow> windows;
      for (Index u = 0; u < users; ++u) {
        const auto k = static_cast<std::size_t>(u);
        windows.push_back(calibrate(lo[k], up[k], y[k]));
      }
      return ScqrStream(std::move(windows), cfg.alpha);
    }
    std::vector<double> glo, gup, gy;
    for (std::size_t b = 0; b < starts.size(); ++b) {
      for (std::size_t k = 0; k < lo.size(); ++k) {
        glo.push_back(lo[k][b]);
        gup.push_back(up[k][b]);
        gy.push_back(y[k][b]);
      }
    }
    return ScqrStream(calibrate(glo, gup, gy), cfg.alpha);
  }();
  write_json(paths.calibration, stream.to_json());
  return stream;
}

PredictSummary command_predict(const PipelineConfig& cfg) {
  const RunPaths paths = RunPaths::of(cfg);
  write_json(paths.config, cfg.to_json());
  Trained t = load_trained(paths);
  if (!fs::exists(paths.calibration)) throw UserError("calibration not found: " + paths.calibration.string());

  json state;
  try {
    state = read_json(paths.calibration);
  } catch (const std::invalid_argument& e) {
    throw UserError(e.what());
  }
  state["mode"] = cfg.ablation.static_cqr ? "static" : "rolling";
  ScqrStream stream = [&] {
    try {
      return ScqrStream::from_json(state);
    } catch (const std::exception& e) {
      throw UserError(paths.calibration.string() + ": " + e.what());
    }
  }();
  if (stream.per_user() && static_cast<Index>(stream.windows().size()) != t.prep.data.user_count()) {
    throw UserError("calibration windows do not match the dataset's users");
  }

  const WindowSampler sampler(t.prep.series, t.config.train.window, t.config.train.horizon);
  const auto starts = sampler.forecast_starts(t.prep.split.calibration_end, t.prep.split.total);
  const auto fc = forecast_kwh(t.model, sampler, starts);
  const Index users = t.prep.data.user_count();

  std::vector<StreamItem> items;
  std::vector<double> medians;
  items.reserve(starts.size() * static_cast<std::size_t>(users));
  for (std::size_t b = 0; b < starts.size(); ++b) {
    const Index step = starts[b];
    for (Index u = 0; u < users; ++u) {
      const auto bi = static_cast<Index>(b);
      items.push_back({t.prep.data.timestamps[static_cast<std::size_t>(step)], u, first_step(fc.low, bi, u),
                       first_step(fc.high, bi, u), t.prep.data.readings(step, u)});
      medians.push_back(first_step(fc.median, bi, u));
    }
  }
  const auto outputs = stream.process(items);

  PredictSummary summary;
  std::vector<IntervalRow> rows;
  rows.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& o = outputs[i];
    rows.push_back({items[i].time, t.prep.data.users.ids[static_cast<std::size_t>(items[i].user)], o.interval.low,
                    medians[i], o.interval.high, items[i].y});
    summary.window_too_small += o.window_too_small ? 1 : 0;
    summary.clamped += o.interval.clamped ? 1 : 0;
  }
  summary.rows = rows.size();
  write_intervals(paths.intervals, rows);
  write_json(paths.stream_state, stream.to_json());
  return summary;
}

MetricsReport command_evaluate(const PipelineConfig& cfg) {
  const RunPaths paths = RunPaths::of(cfg);
  write_json(paths.config, cfg.to_json());
  const auto rows = read_intervals(paths.intervals);
  std::vector<double> y, median, low, high;
  for (const auto& r : rows) {
    if (!r.y) continue;
    y.push_back(*r.y);
    median.push_back(r.median);
    low.push_back(r.low);
    high.push_back(r.high);
  }
  if (y.empty()) throw UserError(paths.intervals.string() + ": no rows with y_true to evaluate");
  MetricsReport report = evaluate(y, median, low, high, cfg.alpha);
  write_json(paths.report, report.to_json());
  return report;
}

MetricsReport command_e2e(const PipelineConfig& cfg) {
  if (cfg.data.dir.empty()) command_generate(cfg);
  command_train(cfg);
  command_calibrate(cfg);
  command_predict(cfg);
  return command_evaluate(cfg);
}

int run_command(const std::string& verb, const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  const RunPaths paths = RunPaths::of(cfg);
  try {
    json summary{{"command", verb}};
    if (verb == "generate") {
      const auto data = command_generate(cfg);
      summary.update({{"data", paths.data.string()}, {"steps", data.steps()}, {"users", data.user_count()}});
    } else if (verb == "train") {
      const auto s = command_train(cfg);
      summary.update({{"checkpoint", paths.model.string()},
                      {"trace", paths.trace.string()},
                      {"parameters", s.parameter_count},
                      {"samples", s.samples},
                      {"steps", s.result.steps},
                      {"final_loss", s.result.epoch_loss.empty() ? json(nullptr) : json(s.result.epoch_loss.back())}});
    } else if (verb == "calibrate") {
      const auto stream = command_calibrate(cfg);
      summary.update({{"calibration", paths.calibration.string()},
                      {"windows", stream.windows().size()},
                      {"window_size", stream.windows().front().size()}});
    } else if (verb == "predict") {
      const auto s = command_predict(cfg);
      summary.update({{"intervals", paths.intervals.string()}, {"rows", s.rows}, {"clamped", s.clamped}});
      if (s.window_too_small > 0) {
        err << json{{"warning", "calibration window too small for alpha; used the largest score"},
                    {"intervals", s.window_too_small}}.dump()
            << '\n';
      }
    } else if (verb == "evaluate" || verb == "e2e") {
      const auto report = verb == "e2e" ? command_e2e(cfg) : command_evaluate(cfg);
      summary.update({{"report", paths.report.string()}, {"metrics", report.to_json()}});
    } else {
      throw UserError("unknown command '" + verb + "'");
    }
    out << summary.dump() << '\n';
    return 0;
  } catch (const UserError& e) {
    err << json{{"error", e.what()}, {"kind", "user"}, {"command", verb}}.dump() << '\n';
    return 1;
  } catch (const DataError& e) {
    err << json{{"error", e.what()}, {"kind", "user"}, {"command", verb}}.dump() << '\n';
    return 1;
  } catch (const TrainingDiverged& e) {
    err << json{{"error", e.what()}, {"kind", "user"}, {"command", verb}, {"step", e.step()}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << json{{"error", e.what()}, {"kind", "internal"}, {"command", verb}}.dump() << '\n';
    return 2;
  }
}

}  // namespace quantgrid
