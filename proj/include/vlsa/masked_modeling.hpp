#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vlsa/autodiff.hpp"
#include "vlsa/mask_plan.hpp"
#include "vlsa/model_config.hpp"
#include "vlsa/patch_embed.hpp"

namespace vlsa {

// round(ratio * n), halves away from zero.
int masked_count(double ratio, int n);

/// Uniform sampling without replacement: text over the first `text_length`
/// (non-PAD) positions, video independently per frame, audio over all
/// patches. Deterministic in (seed, sample_id).
MaskPlan make_mask_plan(const ModelConfig& c, int text_length, std::uint64_t seed, std::uint64_t sample_id);

// Throws ValidationError when indices are unsorted, repeated, or out of range.
void check_mask_plan(const MaskPlan& plan, const Segments& segments);

// Name of the decoder trunk that serves modality m ("shared" or the modality).
std::string decoder_trunk(const ModelConfig& c, ModalityKind m);

void register_decoder_params(ParamStore& store, const ModelConfig& c, CounterRng& rng);

/// Predictions at masked positions, in plan order. Absent when the modality
/// has no masked positions.
struct MaskedPredictions {
  std::optional<Var> video;  // |M_v| x 3P^2, per-patch normalized pixel space
  std::optional<Var> text;   // |M_t| x vocab logits
  std::optional<Var> audio;  // |M_a| x P^2 raw spectrogram values
};

MaskedPredictions decode_masked(Tape& tape, Var encoded, const Segments& segments, const MaskPlan& plan,
                                const ModelConfig& c);

struct LocalTargets {
  Matrix video;
  std::vector<int> text;
  Matrix audio;
};

LocalTargets local_targets(const Triplet& t, const MaskPlan& plan, const ModelConfig& c);

struct LocalLoss {
  Var audio;
  Var video;
  Var text;
  Var total;
};

/// MSE over masked audio elements, MSE over masked per-patch-normalized video
/// elements, and mean cross-entropy over masked tokens; empty sets give 0.
LocalLoss local_loss(Tape& tape, const MaskedPredictions& predictions, const LocalTargets& targets);

}  // namespace vlsa
