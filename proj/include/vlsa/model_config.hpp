#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "vlsa/triplet_data.hpp"

namespace vlsa {

enum class ModalityKind : int { video = 0, text = 1, audio = 2 };

/// Subset of {video, text, audio}. Parsed from / printed as e.g. "vta", "va", "".
class ModalitySet {
 public:
  constexpr ModalitySet() = default;
  static constexpr ModalitySet all() { return ModalitySet(0b111); }
  static constexpr ModalitySet none() { return ModalitySet(0); }
  static ModalitySet parse(std::string_view s);

  constexpr bool contains(ModalityKind m) const { return (bits_ >> static_cast<int>(m)) & 1u; }
  constexpr ModalitySet with(ModalityKind m) const { return ModalitySet(bits_ | (1u << static_cast<int>(m))); }
  constexpr int count() const { return ((bits_ >> 0) & 1) + ((bits_ >> 1) & 1) + ((bits_ >> 2) & 1); }
  std::string str() const;

  constexpr bool operator==(const ModalitySet&) const = default;

 private:
  constexpr explicit ModalitySet(unsigned bits) : bits_(bits) {}
  unsigned bits_ = 0;
};

struct PatchConfig {
  int video_patch = 16;
  int audio_patch = 16;
  int dim = 768;

  int patches_per_frame(const DataConfig& d) const { return (d.height / video_patch) * (d.width / video_patch); }
  int video_patches(const DataConfig& d) const { return d.frames * patches_per_frame(d); }
  int audio_patches(const DataConfig& d) const { return (d.time_bins / audio_patch) * (d.freq_bins / audio_patch); }
  int video_patch_size() const { return 3 * video_patch * video_patch; }
  int audio_patch_size() const { return audio_patch * audio_patch; }
  int sequence_length(const DataConfig& d) const { return video_patches(d) + d.max_tokens + audio_patches(d); }

  void validate(const DataConfig& d) const;
  bool operator==(const PatchConfig&) const = default;
};

struct EncoderConfig {
  int dim = 768;
  int layers = 12;
  int heads = 12;
  int mlp_ratio = 4;

  int head_dim() const { return dim / heads; }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct DecoderConfig {
  int layers = 2;
  int dim = 0;    // 0 means encoder dim / 2
  int heads = 0;  // 0 means the encoder head count
  // Modalities whose masked prediction runs through the one shared trunk;
  // every other modality gets a trunk of its own.
  ModalitySet shared = ModalitySet::all();

  bool operator==(const DecoderConfig&) const = default;
};

struct MaskRatios {
  double text = 0.15;
  double video = 0.75;
  double audio = 0.75;

  bool operator==(const MaskRatios&) const = default;
};

struct ModelConfig {
  DataConfig data;
  PatchConfig patch;
  EncoderConfig encoder;
  DecoderConfig decoder;
  MaskRatios mask;

  // Desk-scale model: D=64, 2 layers, 2 heads, 8x8 patches on DataConfig::desk().
  static ModelConfig desk();
  // Full-size recipe: ViT-base encoder on the default DataConfig.
  static ModelConfig paper();
  // Gradient-check scale: D=16, 1 layer, 2 frames of 8x8, 16x16 spectrograms.
  static ModelConfig tiny();

  int decoder_dim() const { return decoder.dim > 0 ? decoder.dim : encoder.dim / 2; }
  int decoder_heads() const { return decoder.heads > 0 ? decoder.heads : encoder.heads; }

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
// `model` section keys; see README for the schema. Unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& model, const DataConfig& data, const ModelConfig& base);

}  // namespace vlsa
