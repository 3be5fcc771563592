#pragma once

#include <span>
#include <vector>

#include "vlsa/autodiff.hpp"
#include "vlsa/mask_plan.hpp"
#include "vlsa/model_config.hpp"
#include "vlsa/rng.hpp"
#include "vlsa/triplet_data.hpp"

namespace vlsa {

// (frames * I) x (3 * P * P): frame-major, patches in raster order, each row
// channel-major then row-major within the patch.
Matrix patchify_video(std::span<const float> video, int frames, int height, int width, int patch);
std::vector<double> unpatchify_video(const Matrix& patches, int frames, int height, int width, int patch);

// A x (P * P), patches in raster order over (time / P) x (freq / P).
Matrix patchify_audio(std::span<const float> spectrogram, int time_bins, int freq_bins, int patch);
std::vector<double> unpatchify_audio(const Matrix& patches, int time_bins, int freq_bins, int patch);

// Zero mean, unit variance within each row (eps 1e-6 in the variance).
Matrix normalize_patches(const Matrix& patches);

struct Segment {
  int begin = 0;
  int length = 0;
  int end() const { return begin + length; }
};

struct Segments {
  Segment video;
  Segment text;
  Segment audio;

  int total() const { return audio.end(); }
  const Segment& of(ModalityKind m) const;
};

Segments make_segments(const ModelConfig& c);

/// The concatenated video|text|audio token sequence for one triplet.
struct PatchSequence {
  Var embeddings;  // L x D
  Segments segments;
  // One flag per text position; PAD positions have zero content embedding.
  std::vector<bool> text_pad;
};

struct EmbedOptions {
  const MaskPlan* mask = nullptr;
  // Modalities whose content embedding is replaced by zeros (type and
  // position vectors are kept).
  ModalitySet zero_content = ModalitySet::none();
};

void register_embedder_params(ParamStore& store, const ModelConfig& c, CounterRng& rng);

PatchSequence embed_triplet(Tape& tape, const Triplet& t, const ModelConfig& c, const EmbedOptions& opts = {});

}  // namespace vlsa
