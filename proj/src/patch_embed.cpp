#include "vlsa/patch_embed.hpp"

#include <cmath>
#include <stdexcept>

#include "vlsa/error.hpp"
#include "vlsa/param_init.hpp"

namespace vlsa {

Matrix patchify_video(std::span<const float> video, int frames, int height, int width, int patch) {
  if (patch <= 0 || height % patch != 0 || width % patch != 0)
    throw ValidationError("patchify_video: frame size not divisible by patch size");
  if (video.size() != static_cast<std::size_t>(frames) * 3 * height * width)
    throw ValidationError("patchify_video: video size does not match dimensions");
  const int ph = height / patch, pw = width / patch;
  Matrix out(static_cast<Eigen::Index>(frames) * ph * pw, 3 * patch * patch);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  Eigen::Index row = 0;
  for (int f = 0; f < frames; ++f) {
    for (int py = 0; py < ph; ++py) {
      for (int px = 0; px < pw; ++px, ++row) {
        Eigen::Index col = 0;
        for (int ch = 0; ch < 3; ++ch) {
          const std::size_t base = (static_cast<std::size_t>(f) * 3 + ch) * plane;
          for (int y = 0; y < patch; ++y) {
            for (int x = 0; x < patch; ++x) {
              out(row, col++) = video[base + static_cast<std::size_t>(py * patch + y) * width + px * patch + x];
            }
          }
        }
      }
    }
  }
  return out;
}

std::vector<double> unpatchify_video(const Matrix& patches, int frames, int height, int width, int patch) {
  const int ph = height / patch, pw = width / patch;
  if (patches.rows() != static_cast<Eigen::Index>(frames) * ph * pw || patches.cols() != 3 * patch * patch)
    throw ValidationError("unpatchify_video: patch matrix shape mismatch");
  std::vector<double> video(static_cast<std::size_t>(frames) * 3 * height * width);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  Eigen::Index row = 0;
  for (int f = 0; f < frames; ++f) {
    for (int py = 0; py < ph; ++py) {
      for (int px = 0; px < pw; ++px, ++row) {
        Eigen::Index col = 0;
        for (int ch = 0; ch < 3; ++ch) {
          const std::size_t base = (static_cast<std::size_t>(f) * 3 + ch) * plane;
          for (int y = 0; y < patch; ++y) {
            for (int x = 0; x < patch; ++x) {
              video[base + static_cast<std::size_t>(py * patch + y) * width + px * patch + x] = patches(row, col++);
            }
          }
        }
      }
    }
  }
  return video;
}

Matrix patchify_audio(std::span<const float> spectrogram, int time_bins, int freq_bins, int patch) {
  if (patch <= 0 || time_bins % patch != 0 || freq_bins % patch != 0)
    throw ValidationError("patchify_audio: spectrogram size not divisible by patch size");
  if (spectrogram.size() != static_cast<std::size_t>(time_bins) * freq_bins)
    throw ValidationError("patchify_audio: spectrogram size does not match dimensions");
  const int pt = time_bins / patch, pf = freq_bins / patch;
  Matrix out(static_cast<Eigen::Index>(pt) * pf, patch * patch);
  Eigen::Index row = 0;
  for (int i = 0; i < pt; ++i) {
    for (int j = 0; j < pf; ++j, ++row) {
      Eigen::Index col = 0;
      for (int y = 0; y < patch; ++y) {
        for (int x = 0; x < patch; ++x) {
          out(row, col++) = spectrogram[static_cast<std::size_t>(i * patch + y) * freq_bins + j * patch + x];
        }
      }
    }
  }
  return out;
}

std::vector<double> unpatchify_audio(const Matrix& patches, int time_bins, int freq_bins, int patch) {
  const int pt = time_bins / patch, pf = freq_bins / patch;
  if (patches.rows() != static_cast<Eigen::Index>(pt) * pf || patches.cols() != patch * patch)
    throw ValidationError("unpatchify_audio: patch matrix shape mismatch");
  std::vector<double> spec(static_cast<std::size_t>(time_bins) * freq_bins);
  Eigen::Index row = 0;
  for (int i = 0; i < pt; ++i) {
    for (int j = 0; j < pf; ++j, ++row) {
      Eigen::Index col = 0;
      for (int y = 0; y < patch; ++y) {
        for (int x = 0; x < patch; ++x) {
          spec[static_cast<std::size_t>(i * patch + y) * freq_bins + j * patch + x] = patches(row, col++);
        }
      }
    }
  }
  return spec;
}

Matrix normalize_patches(const Matrix& patches) {
  Matrix out(patches.rows(), patches.cols());
  for (Eigen::Index r = 0; r < patches.rows(); ++r) {
    const double mean = patches.row(r).mean();
    const double var = (patches.row(r).array() - mean).square().mean();
    out.row(r) = (patches.row(r).array() - mean) / std::sqrt(var + 1e-6);
  }
  return out;
}

const Segment& Segments::of(ModalityKind m) const {
  switch (m) {
    case ModalityKind::video:
      return video;
    case ModalityKind::text:
      return text;
    case ModalityKind::audio:
      return audio;
  }
  throw std::logic_error("bad modality");
}

Segments make_segments(const ModelConfig& c) {
  Segments s;
  s.video = Segment{0, c.patch.video_patches(c.data)};
  s.text = Segment{s.video.end(), c.data.max_tokens};
  s.audio = Segment{s.text.end(), c.patch.audio_patches(c.data)};
  return s;
}

void register_embedder_params(ParamStore& store, const ModelConfig& c, CounterRng& rng) {
  ParamInit init(store, rng);
  const int d = c.encoder.dim;
  init.linear("embed.video.proj", c.patch.video_patch_size(), d);
  init.linear("embed.audio.proj", c.patch.audio_patch_size(), d);
  init.embedding("embed.text.table", c.data.vocab_size, d);
  init.embedding("embed.video.frame_pos", c.data.frames, d);
  init.embedding("embed.video.patch_pos", c.patch.patches_per_frame(c.data), d);
  init.embedding("embed.text.pos", c.data.max_tokens, d);
  init.embedding("embed.audio.pos", c.patch.audio_patches(c.data), d);
  for (const char* m : {"video", "text", "audio"}) {
    init.embedding(std::string("embed.type.") + m, 1, d);
    init.embedding(std::string("embed.mask.") + m, 1, d);
  }
}

namespace {

std::vector<bool> mask_flags(const std::vector<int>& indices, int length, const char* what) {
  std::vector<bool> flags(static_cast<std::size_t>(length), false);
  for (int i : indices) {
    if (i < 0 || i >= length)
      throw ValidationError(std::string("mask plan: ") + what + " index " + std::to_string(i) + " outside segment of length " +
                            std::to_string(length));
    flags[static_cast<std::size_t>(i)] = true;
  }
  return flags;
}

Var maybe_mask(Tape& tape, Var content, const std::vector<int>* indices, const char* name, int length) {
  if (!indices || indices->empty()) return content;
  return replace_rows(content, tape.param(std::string("embed.mask.") + name), mask_flags(*indices, length, name));
}

}  // namespace

PatchSequence embed_triplet(Tape& tape, const Triplet& t, const ModelConfig& c, const EmbedOptions& opts) {
  check_triplet(t, c.data);
  const int d = c.encoder.dim;
  PatchSequence seq;
  seq.segments = make_segments(c);
  const Segments& seg = seq.segments;
  const MaskPlan* plan = opts.mask;

  // Video.
  Var video;
  if (opts.zero_content.contains(ModalityKind::video)) {
    video = tape.constant(Matrix::Zero(seg.video.length, d));
  } else {
    Var patches = tape.constant(patchify_video(t.video, c.data.frames, c.data.height, c.data.width, c.patch.video_patch));
    video = add_row(matmul(patches, tape.param("embed.video.proj.w")), tape.param("embed.video.proj.b"));
  }
  video = maybe_mask(tape, video, plan ? &plan->video : nullptr, "video", seg.video.length);
  {
    const int per_frame = c.patch.patches_per_frame(c.data);
    std::vector<int> frame_idx(static_cast<std::size_t>(seg.video.length));
    std::vector<int> patch_idx(static_cast<std::size_t>(seg.video.length));
    for (int i = 0; i < seg.video.length; ++i) {
      frame_idx[static_cast<std::size_t>(i)] = i / per_frame;
      patch_idx[static_cast<std::size_t>(i)] = i % per_frame;
    }
    Var pos = add(gather_rows(tape.param("embed.video.frame_pos"), frame_idx),
                  gather_rows(tape.param("embed.video.patch_pos"), patch_idx));
    video = add_row(add(video, pos), tape.param("embed.type.video"));
  }

  // Text.
  seq.text_pad.resize(static_cast<std::size_t>(seg.text.length));
  Var text;
  {
    std::vector<int> ids(t.tokens.begin(), t.tokens.end());
    for (std::size_t i = 0; i < ids.size(); ++i) seq.text_pad[i] = ids[i] == Vocab::kPad;
    if (opts.zero_content.contains(ModalityKind::text)) {
      text = tape.constant(Matrix::Zero(seg.text.length, d));
    } else {
      text = gather_rows(tape.param("embed.text.table"), ids);
      text = replace_rows(text, tape.constant(Matrix::Zero(1, d)), seq.text_pad);
    }
    text = maybe_mask(tape, text, plan ? &plan->text : nullptr, "text", seg.text.length);
    text = add_row(add(text, tape.param("embed.text.pos")), tape.param("embed.type.text"));
  }

  // Audio.
  Var audio;
  if (opts.zero_content.contains(ModalityKind::audio)) {
    audio = tape.constant(Matrix::Zero(seg.audio.length, d));
  } else {
    Var patches =
        tape.constant(patchify_audio(t.spectrogram, c.data.time_bins, c.data.freq_bins, c.patch.audio_patch));
    audio = add_row(matmul(patches, tape.param("embed.audio.proj.w")), tape.param("embed.audio.proj.b"));
  }
  audio = maybe_mask(tape, audio, plan ? &plan->audio : nullptr, "audio", seg.audio.length);
  audio = add_row(add(audio, tape.param("embed.audio.pos")), tape.param("embed.type.audio"));

  const Var parts[] = {video, text, audio};
  seq.embeddings = concat_rows(parts);
  return seq;
}

}  // namespace vlsa
