#pragma once

#include <cstdint>
#include <optional>

#include "vlsa/autodiff.hpp"
#include "vlsa/global_matching.hpp"
#include "vlsa/masked_modeling.hpp"
#include "vlsa/model_config.hpp"
#include "vlsa/patch_embed.hpp"

namespace vlsa {

/// Configuration plus every parameter tensor: embedder, joint encoder,
/// masked-prediction decoder, and matching heads.
struct Model {
  ModelConfig config;
  ParamStore params;
};

// Truncated normal(0, 0.02) weights and tables, zero biases, unit norm gains.
Model init_model(const ModelConfig& config, std::uint64_t seed);

struct ForwardOptions {
  const MaskPlan* mask = nullptr;  // also enables the decoder and local loss
  ModalitySet joint = ModalitySet::all();
  ModalitySet zero_content = ModalitySet::none();
};

struct SampleOutputs {
  PatchSequence sequence;
  Var encoded;
  GlobalEmbeddings globals;
  std::optional<LocalLoss> local;
};

SampleOutputs forward_sample(Tape& tape, const Model& model, const Triplet& t, const ForwardOptions& opts = {});

struct GlobalRows {
  RowVector video;
  RowVector text;
  RowVector audio;
};

// Unmasked forward pass, pooled embeddings only.
GlobalRows embed_globals(const Model& model, const Triplet& t, const ForwardOptions& opts = {});

}  // namespace vlsa
