#pragma once

#include <string>
#include <vector>

#include "vlsa/autodiff.hpp"
#include "vlsa/model_config.hpp"
#include "vlsa/patch_embed.hpp"
#include "vlsa/rng.hpp"

namespace vlsa {

struct GlobalEmbeddings {
  Var video;  // 1 x D
  Var text;
  Var audio;
};

// Mean of the video rows, the non-PAD text rows, and the audio rows.
GlobalEmbeddings pool_global(Var encoded, const Segments& segments, const std::vector<bool>& text_pad);

// B x B matrix of cos(a_i, b_j) / tau. Zero-norm rows are rejected.
Var contrastive_logits(Var a, Var b, double tau);
// a -> b direction: mean_i -log softmax_j(cos(a_i, b_j) / tau)[i].
Var contrastive_loss(Var a, Var b, double tau);
// a -> b plus b -> a.
Var symmetric_contrastive_loss(Var a, Var b, double tau);

struct MatchPair {
  int first = 0;   // batch index into the first modality
  int second = 0;  // batch index into the second modality
  double label = 1.0;
};

// One positive (i, i) per batch index followed by one negative (i, j), j != i
// drawn uniformly; batches of one have no negatives.
std::vector<MatchPair> sample_match_pairs(int batch, CounterRng& rng);

// Sum of BCE over pairs; probability = sigmoid([a_first, b_second] W + b)
// with the head "<head>.w" (2D x 1) and "<head>.b".
Var matching_loss(Tape& tape, Var a, Var b, const std::vector<MatchPair>& pairs, const std::string& head);

struct MatchingPlan {
  std::vector<MatchPair> audio_video;
  std::vector<MatchPair> audio_text;
  std::vector<MatchPair> video_text;
};

MatchingPlan draw_matching_plan(int batch, CounterRng& rng);

struct GlobalLossConfig {
  double temperature = 0.05;
  // Include the BCE matching terms.
  bool matching = true;
};

void register_matching_params(ParamStore& store, const ModelConfig& c, CounterRng& rng);

/// Global audio matching: audio<->video and audio<->text symmetric
/// contrastive terms plus the two matching terms. Inputs are B x D.
Var global_loss(Tape& tape, Var video, Var text, Var audio, const MatchingPlan& plan, const GlobalLossConfig& cfg);

/// Video-text baseline: video<->text symmetric contrastive plus matching.
Var vtm_baseline_loss(Tape& tape, Var video, Var text, const MatchingPlan& plan, const GlobalLossConfig& cfg);

inline double total_loss(double local_total, double global, double lambda) { return local_total + lambda * global; }
Var total_loss(Var local_total, Var global, double lambda);

}  // namespace vlsa
