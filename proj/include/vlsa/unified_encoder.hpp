#pragma once

#include <string>
#include <vector>

#include "vlsa/autodiff.hpp"
#include "vlsa/model_config.hpp"
#include "vlsa/param_init.hpp"
#include "vlsa/patch_embed.hpp"

namespace vlsa {

/// Attention probabilities captured during a forward pass, one L x L matrix
/// per (layer, head).
struct AttentionTrace {
  int heads = 0;
  std::vector<Matrix> probs;

  const Matrix& at(int layer, int head) const { return probs.at(static_cast<std::size_t>(layer * heads + head)); }
};

// Additive 0 / -inf mask. Tokens of modalities in `joint` attend to each
// other; every other modality only attends within itself. Empty when all
// three modalities are joint.
Matrix modality_attention_mask(const Segments& segments, ModalitySet joint);

void register_block_params(ParamInit& init, const std::string& prefix, int dim, int mlp_ratio);

// Pre-norm block: x + MHA(LN(x)), then h + MLP(LN(h)) with a GELU MLP.
Var transformer_block(Tape& tape, Var x, const std::string& prefix, int heads, const Matrix* attention_mask,
                      AttentionTrace* trace = nullptr);

void register_encoder_params(ParamStore& store, const ModelConfig& c, CounterRng& rng);

// The joint encoder over a full L x D sequence; ends with a layer norm.
Var encode(Tape& tape, Var x, const ModelConfig& c, const Matrix* attention_mask = nullptr,
           AttentionTrace* trace = nullptr);

// Probability row of query `query` for (layer, head) when encoding `x`.
RowVector attention_weights(const ParamStore& params, const ModelConfig& c, const Matrix& x, int layer, int head,
                            int query, const Matrix* attention_mask = nullptr);

}  // namespace vlsa
