#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "vlsa/model_config.hpp"
#include "vlsa/retrieval_eval.hpp"
#include "vlsa/trainer.hpp"

namespace vlsa {

struct EvalConfig {
  AbsentModality absent = AbsentModality::joint;
  // Encoder attention groups at evaluation; defaults to the training setting.
  ModalitySet joint = ModalitySet::all();

  bool operator==(const EvalConfig&) const = default;
};

/// One JSON document with optional "preset" ("desk", "tiny", "paper") and
/// sections "data", "model", "train", "eval". Missing keys take the preset's
/// values; unknown keys are rejected.
struct RunConfig {
  std::string preset = "desk";
  ModelConfig model = ModelConfig::desk();
  TrainConfig train = TrainConfig::desk();
  EvalConfig eval;

  bool operator==(const RunConfig&) const = default;
};

RunConfig preset_run_config(const std::string& name);
RunConfig run_config_from_json(const nlohmann::json& doc);
// Throws IoError for unreadable files and ValidationError for bad content.
RunConfig load_run_config(const std::filesystem::path& path);
// Fully resolved document; parsing it yields the same RunConfig.
nlohmann::json to_json(const RunConfig& c);

EvalOptions eval_options(const EvalConfig& e, int threads);

}  // namespace vlsa
