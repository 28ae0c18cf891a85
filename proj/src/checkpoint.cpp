#include "quantgrid/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace quantgrid {

namespace {

const char* similarity_name(Similarity s) { return s == Similarity::Cosine ? "cosine" : "dot"; }

Similarity similarity_from(const std::string& s) {
  if (s == "cosine") return Similarity::Cosine;
  if (s == "dot") return Similarity::Dot;
  throw std::invalid_argument("unknown similarity '" + s + "'");
}

}  // namespace

nlohmann::json to_json(const ModelConfig& c) {
  return {{"nodes", c.nodes},
          {"input_channels", c.input_channels},
          {"spatial_dim", c.spatial_dim},
          {"tod_dim", c.tod_dim},
          {"dow_dim", c.dow_dim},
          {"moy_dim", c.moy_dim},
          {"steps_per_day", c.steps_per_day},
          {"hidden", c.hidden},
          {"diffusion_order", c.diffusion_order},
          {"pool_width", c.pool_width},
          {"pool_blocks", c.pool_blocks},
          {"horizon", c.horizon},
          {"use_pools", c.use_pools},
          {"blockwise", c.blockwise},
          {"similarity", similarity_name(c.similarity)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.nodes = j.at("nodes").get<Index>();
  c.input_channels = j.at("input_channels").get<Index>();
  c.spatial_dim = j.at("spatial_dim").get<Index>();
  c.tod_dim = j.at("tod_dim").get<Index>();
  c.dow_dim = j.at("dow_dim").get<Index>();
  c.moy_dim = j.at("moy_dim").get<Index>();
  c.steps_per_day = j.at("steps_per_day").get<int>();
  c.hidden = j.at("hidden").get<Index>();
  c.diffusion_order = j.at("diffusion_order").get<int>();
  c.pool_width = j.at("pool_width").get<Index>();
  c.pool_blocks = j.at("pool_blocks").get<Index>();
  c.horizon = j.at("horizon").get<Index>();
  c.use_pools = j.at("use_pools").get<bool>();
  c.blockwise = j.at("blockwise").get<bool>();
  c.similarity = similarity_from(j.at("similarity").get<std::string>());
  c.validate();
  return c;
}

ModelCheckpoint make_checkpoint(const Model& model, const Scaler& scaler, nlohmann::json extra) {
  ModelCheckpoint ck{model.config(), scaler, std::move(extra), {}};
  for (const Parameter* p : model.parameters()) ck.parameters.emplace(p->name, p->value);
  return ck;
}

void restore(Model& model, const ModelCheckpoint& ck) {
  const auto params = model.parameters();
  if (params.size() != ck.parameters.size()) {
    throw std::invalid_argument("checkpoint holds " + std::to_string(ck.parameters.size()) + " parameters, model has " +
                                std::to_string(params.size()));
  }
  for (Parameter* p : params) {
    const auto it = ck.parameters.find(p->name);
    if (it == ck.parameters.end()) throw std::invalid_argument("checkpoint lacks parameter " + p->name);
    if (it->second.shape() != p->value.shape()) {
      throw std::invalid_argument("checkpoint parameter " + p->name + " has shape " + to_string(it->second.shape()) +
                                  ", model expects " + to_string(p->value.shape()));
    }
    p->value = it->second;
    p->zero_grad();
  }
  model.refresh_centroids();
}

nlohmann::json to_json(const ModelCheckpoint& ck) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& [name, t] : ck.parameters) {
    params.push_back({{"name", name},
                      {"shape", t.shape()},
                      {"data", std::vector<double>(t.data(), t.data() + t.size())}});
  }
  return {{"format", "quantgrid-model"},
          {"version", 1},
          {"config", to_json(ck.config)},
          {"scaler", {{"mean", ck.scaler.mean}, {"scale", ck.scaler.scale}}},
          {"extra", ck.extra},
          {"parameters", std::move(params)}};
}

ModelCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "quantgrid-model") throw std::invalid_argument("not a model checkpoint");
  if (j.at("version").get<int>() != 1) throw std::invalid_argument("unsupported checkpoint version");
  ModelCheckpoint ck;
  ck.config = model_config_from_json(j.at("config"));
  ck.scaler.mean = j.at("scaler").at("mean").get<double>();
  ck.scaler.scale = j.at("scaler").at("scale").get<double>();
  ck.extra = j.value("extra", nlohmann::json::object());
  for (const auto& p : j.at("parameters")) {
    const auto shape = p.at("shape").get<Shape>();
    const auto data = p.at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != shape_size(shape)) {
      throw std::invalid_argument("checkpoint parameter " + p.at("name").get<std::string>() + " has the wrong size");
    }
    Tensor t(shape);
    std::copy(data.begin(), data.end(), t.data());
    ck.parameters.emplace(p.at("name").get<std::string>(), std::move(t));
  }
  return ck;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ck) { write_json(path, to_json(ck)); }

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::invalid_argument("checkpoint not found: " + path.string());
  return checkpoint_from_json(read_json(path));
}

}  // namespace quantgrid
