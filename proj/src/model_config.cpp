#include "vlsa/model_config.hpp"

#include "vlsa/error.hpp"

namespace vlsa {

using nlohmann::json;

ModalitySet ModalitySet::parse(std::string_view s) {
  ModalitySet out;
  if (s == "none") return out;
  for (char ch : s) {
    ModalityKind m;
    switch (ch) {
      case 'v':
        m = ModalityKind::video;
        break;
      case 't':
        m = ModalityKind::text;
        break;
      case 'a':
        m = ModalityKind::audio;
        break;
      default:
        throw ValidationError("modality set '" + std::string(s) + "' may only contain the letters v, t, a");
    }
    if (out.contains(m)) throw ValidationError("modality set '" + std::string(s) + "' repeats a letter");
    out = out.with(m);
  }
  return out;
}

std::string ModalitySet::str() const {
  std::string s;
  if (contains(ModalityKind::video)) s += 'v';
  if (contains(ModalityKind::text)) s += 't';
  if (contains(ModalityKind::audio)) s += 'a';
  return s.empty() ? "none" : s;
}

void PatchConfig::validate(const DataConfig& d) const {
  if (video_patch <= 0 || audio_patch <= 0) throw ValidationError("model: patch sizes must be positive");
  if (dim <= 0) throw ValidationError("model.dim must be positive");
  if (d.height % video_patch != 0 || d.width % video_patch != 0)
    throw ValidationError("model.video_patch must divide data.height and data.width");
  if (d.time_bins % audio_patch != 0 || d.freq_bins % audio_patch != 0)
    throw ValidationError("model.audio_patch must divide data.time_bins and data.freq_bins");
}

void EncoderConfig::validate() const {
  if (dim <= 0) throw ValidationError("model.dim must be positive");
  if (layers < 1) throw ValidationError("model.layers must be at least 1");
  if (heads < 1 || dim % heads != 0) throw ValidationError("model.heads must divide model.dim");
  if (mlp_ratio < 1) throw ValidationError("model.mlp_ratio must be at least 1");
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.data = DataConfig::desk();
  c.patch = PatchConfig{8, 8, 64};
  c.encoder = EncoderConfig{64, 2, 2, 4};
  return c;
}

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.data = DataConfig{2, 8, 8, 6, 40, 16, 16};
  c.patch = PatchConfig{4, 4, 16};
  c.encoder = EncoderConfig{16, 1, 2, 2};
  c.decoder.layers = 1;
  return c;
}

void ModelConfig::validate() const {
  data.validate();
  patch.validate(data);
  encoder.validate();
  if (patch.dim != encoder.dim) throw ValidationError("model: patch embedding dim must equal encoder dim");
  if (decoder.layers < 0) throw ValidationError("model.decoder_layers must be non-negative");
  const int ddim = decoder_dim();
  const int dheads = decoder_heads();
  if (ddim <= 0) throw ValidationError("model.decoder_dim must be positive");
  if (decoder.layers > 0 && (dheads < 1 || ddim % dheads != 0))
    throw ValidationError("model.decoder_heads must divide the decoder dim");
  for (double r : {mask.text, mask.video, mask.audio}) {
    if (!(r >= 0.0 && r <= 1.0)) throw ValidationError("model: mask ratios must lie in [0, 1]");
  }
}

json to_json(const ModelConfig& c) {
  return json{{"video_patch", c.patch.video_patch},
              {"audio_patch", c.patch.audio_patch},
              {"dim", c.encoder.dim},
              {"layers", c.encoder.layers},
              {"heads", c.encoder.heads},
              {"mlp_ratio", c.encoder.mlp_ratio},
              {"decoder_layers", c.decoder.layers},
              {"decoder_dim", c.decoder_dim()},
              {"decoder_heads", c.decoder_heads()},
              {"shared_decoder_modalities", c.decoder.shared.str()},
              {"mask_text", c.mask.text},
              {"mask_video", c.mask.video},
              {"mask_audio", c.mask.audio}};
}

namespace {

int get_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ValidationError("model." + key + ": expected an integer");
  return v.get<int>();
}

double get_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ValidationError("model." + key + ": expected a number");
  return v.get<double>();
}

}  // namespace

ModelConfig model_config_from_json(const json& model, const DataConfig& data, const ModelConfig& base) {
  if (!model.is_object()) throw ValidationError("model section must be an object");
  ModelConfig c = base;
  c.data = data;
  for (const auto& [key, v] : model.items()) {
    if (key == "video_patch") c.patch.video_patch = get_int(v, key);
    else if (key == "audio_patch") c.patch.audio_patch = get_int(v, key);
    else if (key == "dim") c.encoder.dim = c.patch.dim = get_int(v, key);
    else if (key == "layers") c.encoder.layers = get_int(v, key);
    else if (key == "heads") c.encoder.heads = get_int(v, key);
    else if (key == "mlp_ratio") c.encoder.mlp_ratio = get_int(v, key);
    else if (key == "decoder_layers") c.decoder.layers = get_int(v, key);
    else if (key == "decoder_dim") c.decoder.dim = get_int(v, key);
    else if (key == "decoder_heads") c.decoder.heads = get_int(v, key);
    else if (key == "shared_decoder_modalities") {
      if (!v.is_string()) throw ValidationError("model." + key + ": expected a string such as \"vta\"");
      c.decoder.shared = ModalitySet::parse(v.get<std::string>());
    } else if (key == "mask_text") c.mask.text = get_double(v, key);
    else if (key == "mask_video") c.mask.video = get_double(v, key);
    else if (key == "mask_audio") c.mask.audio = get_double(v, key);
    else throw ValidationError("model." + key + ": unknown key");
  }
  // Canonical form: explicit values equal to the derived defaults are stored as 0.
  if (c.decoder.dim == c.encoder.dim / 2) c.decoder.dim = 0;
  if (c.decoder.heads == c.encoder.heads) c.decoder.heads = 0;
  c.validate();
  return c;
}

}  // namespace vlsa
