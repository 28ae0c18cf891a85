#pragma once

#include "quantgrid/model.hpp"
#include "quantgrid/train.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace quantgrid {

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Everything needed to rebuild a trained model, minus the graph.
struct ModelCheckpoint {
  ModelConfig config;
  Scaler scaler;
  nlohmann::json extra = nlohmann::json::object();  // caller provenance
  std::map<std::string, Tensor> parameters;
};

ModelCheckpoint make_checkpoint(const Model& model, const Scaler& scaler, nlohmann::json extra = nlohmann::json::object());

/// Copies checkpointed values into `model`; names and shapes must match exactly.
void restore(Model& model, const ModelCheckpoint& checkpoint);

nlohmann::json to_json(const ModelCheckpoint& checkpoint);
ModelCheckpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& checkpoint);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Reads a JSON document, naming the file in any error.
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace quantgrid
