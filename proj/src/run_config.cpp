#include "vlsa/run_config.hpp"

#include <fstream>

#include "vlsa/error.hpp"

namespace vlsa {

using nlohmann::json;

RunConfig preset_run_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") {
    c.model = ModelConfig::desk();
    c.train = TrainConfig::desk();
  } else if (name == "tiny") {
    c.model = ModelConfig::tiny();
    c.train = TrainConfig::desk();
  } else if (name == "paper") {
    c.model = ModelConfig::paper();
    c.train = TrainConfig::paper();
  } else {
    throw ValidationError("preset: unknown value '" + name + "'; valid: desk, tiny, paper");
  }
  return c;
}

RunConfig run_config_from_json(const json& doc) {
  if (!doc.is_object()) throw ValidationError("configuration document must be a JSON object");
  for (const auto& [key, v] : doc.items()) {
    if (key != "preset" && key != "data" && key != "model" && key != "train" && key != "eval")
      throw ValidationError(key + ": unknown section");
  }
  std::string preset = "desk";
  if (doc.contains("preset")) {
    if (!doc["preset"].is_string()) throw ValidationError("preset: expected a string");
    preset = doc["preset"].get<std::string>();
  }
  RunConfig c = preset_run_config(preset);
  const DataConfig data =
      doc.contains("data") ? data_config_from_json(doc["data"], c.model.data, "data") : c.model.data;
  c.model = model_config_from_json(doc.contains("model") ? doc["model"] : json::object(), data, c.model);
  if (doc.contains("train")) c.train = train_config_from_json(doc["train"], c.train);
  c.eval.joint = c.train.joint;
  if (doc.contains("eval")) {
    const json& e = doc["eval"];
    if (!e.is_object()) throw ValidationError("eval section must be an object");
    for (const auto& [key, v] : e.items()) {
      if (!v.is_string()) throw ValidationError("eval." + key + ": expected a string");
      if (key == "absent_modality") c.eval.absent = parse_absent_modality(v.get<std::string>());
      else if (key == "joint_encoder_modalities") c.eval.joint = ModalitySet::parse(v.get<std::string>());
      else throw ValidationError("eval." + key + ": unknown key");
    }
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open configuration file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": not valid JSON: " + e.what());
  }
  return run_config_from_json(doc);
}

json to_json(const RunConfig& c) {
  const json eval{{"absent_modality", to_string(c.eval.absent)}, {"joint_encoder_modalities", c.eval.joint.str()}};
  return json{{"preset", c.preset},
              {"data", to_json(c.model.data)},
              {"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"eval", eval}};
}

EvalOptions eval_options(const EvalConfig& e, int threads) {
  EvalOptions o;
  o.absent = e.absent;
  o.joint = e.joint;
  o.threads = threads;
  return o;
}

}  // namespace vlsa
