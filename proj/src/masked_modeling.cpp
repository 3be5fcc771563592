#include "vlsa/masked_modeling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vlsa/error.hpp"
#include "vlsa/param_init.hpp"
#include "vlsa/rng.hpp"
#include "vlsa/unified_encoder.hpp"

namespace vlsa {

int masked_count(double ratio, int n) { return static_cast<int>(std::lround(ratio * n)); }

namespace {

std::vector<int> sample_without_replacement(CounterRng& rng, int n, int k, int offset) {
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(n - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  std::vector<int> out(pool.begin(), pool.begin() + k);
  std::sort(out.begin(), out.end());
  for (int& v : out) v += offset;
  return out;
}

}  // namespace

MaskPlan make_mask_plan(const ModelConfig& c, int text_length, std::uint64_t seed, std::uint64_t sample_id) {
  if (text_length < 0 || text_length > c.data.max_tokens) throw ValidationError("make_mask_plan: bad text length");
  CounterRng rng = CounterRng(seed).split(sample_id);
  CounterRng text_rng = rng.split(0), video_rng = rng.split(1), audio_rng = rng.split(2);
  MaskPlan plan;
  plan.text = sample_without_replacement(text_rng, text_length, masked_count(c.mask.text, text_length), 0);
  const int per_frame = c.patch.patches_per_frame(c.data);
  const int per_frame_masked = masked_count(c.mask.video, per_frame);
  for (int f = 0; f < c.data.frames; ++f) {
    auto frame = sample_without_replacement(video_rng, per_frame, per_frame_masked, f * per_frame);
    plan.video.insert(plan.video.end(), frame.begin(), frame.end());
  }
  const int audio_patches = c.patch.audio_patches(c.data);
  plan.audio = sample_without_replacement(audio_rng, audio_patches, masked_count(c.mask.audio, audio_patches), 0);
  return plan;
}

void check_mask_plan(const MaskPlan& plan, const Segments& segments) {
  auto check = [](const std::vector<int>& idx, int length, const char* what) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= length)
        throw ValidationError(std::string("mask plan: ") + what + " index " + std::to_string(idx[i]) + " out of range");
      if (i > 0 && idx[i] <= idx[i - 1])
        throw ValidationError(std::string("mask plan: ") + what + " indices must be strictly increasing");
    }
  };
  check(plan.video, segments.video.length, "video");
  check(plan.text, segments.text.length, "text");
  check(plan.audio, segments.audio.length, "audio");
}

std::string decoder_trunk(const ModelConfig& c, ModalityKind m) {
  if (c.decoder.shared.contains(m)) return "shared";
  switch (m) {
    case ModalityKind::video:
      return "video";
    case ModalityKind::text:
      return "text";
    case ModalityKind::audio:
      return "audio";
  }
  return "shared";
}

void register_decoder_params(ParamStore& store, const ModelConfig& c, CounterRng& rng) {
  ParamInit init(store, rng);
  const int ddim = c.decoder_dim();
  std::vector<std::string> trunks;
  for (auto m : {ModalityKind::video, ModalityKind::text, ModalityKind::audio}) {
    const std::string name = decoder_trunk(c, m);
    if (std::find(trunks.begin(), trunks.end(), name) == trunks.end()) trunks.push_back(name);
  }
  for (const auto& t : trunks) {
    const std::string prefix = "dec." + t;
    init.linear(prefix + ".in", c.encoder.dim, ddim);
    for (int l = 0; l < c.decoder.layers; ++l)
      register_block_params(init, prefix + "." + std::to_string(l), ddim, c.encoder.mlp_ratio);
    init.layer_norm(prefix + ".norm", ddim);
  }
  init.linear("dec.head.video", ddim, c.patch.video_patch_size());
  init.linear("dec.head.text", ddim, c.data.vocab_size);
  init.linear("dec.head.audio", ddim, c.patch.audio_patch_size());
}

namespace {

Var run_trunk(Tape& tape, Var encoded, const std::string& trunk, const ModelConfig& c) {
  const std::string prefix = "dec." + trunk;
  Var h = add_row(matmul(encoded, tape.param(prefix + ".in.w")), tape.param(prefix + ".in.b"));
  for (int l = 0; l < c.decoder.layers; ++l)
    h = transformer_block(tape, h, prefix + "." + std::to_string(l), c.decoder_heads(), nullptr);
  return layer_norm(h, tape.param(prefix + ".norm.g"), tape.param(prefix + ".norm.b"));
}

}  // namespace

MaskedPredictions decode_masked(Tape& tape, Var encoded, const Segments& segments, const MaskPlan& plan,
                                const ModelConfig& c) {
  if (encoded.rows() != segments.total() || encoded.cols() != c.encoder.dim)
    throw ValidationError("decode_masked: encoded sequence does not match the segment layout");
  check_mask_plan(plan, segments);
  std::vector<std::pair<std::string, Var>> trunks;
  auto trunk_output = [&](ModalityKind m) {
    const std::string name = decoder_trunk(c, m);
    for (const auto& [n, v] : trunks)
      if (n == name) return v;
    Var out = run_trunk(tape, encoded, name, c);
    trunks.emplace_back(name, out);
    return out;
  };
  auto head = [&](ModalityKind m, const std::vector<int>& idx, int offset, const char* name) -> std::optional<Var> {
    if (idx.empty()) return std::nullopt;
    std::vector<int> rows(idx.begin(), idx.end());
    for (int& r : rows) r += offset;
    Var picked = gather_rows(trunk_output(m), rows);
    const std::string prefix = std::string("dec.head.") + name;
    return add_row(matmul(picked, tape.param(prefix + ".w")), tape.param(prefix + ".b"));
  };
  MaskedPredictions out;
  out.video = head(ModalityKind::video, plan.video, segments.video.begin, "video");
  out.text = head(ModalityKind::text, plan.text, segments.text.begin, "text");
  out.audio = head(ModalityKind::audio, plan.audio, segments.audio.begin, "audio");
  return out;
}

LocalTargets local_targets(const Triplet& t, const MaskPlan& plan, const ModelConfig& c) {
  LocalTargets targets;
  if (!plan.video.empty()) {
    const Matrix patches =
        normalize_patches(patchify_video(t.video, c.data.frames, c.data.height, c.data.width, c.patch.video_patch));
    targets.video.resize(static_cast<Eigen::Index>(plan.video.size()), patches.cols());
    for (std::size_t i = 0; i < plan.video.size(); ++i)
      targets.video.row(static_cast<Eigen::Index>(i)) = patches.row(plan.video[i]);
  }
  for (int i : plan.text) targets.text.push_back(t.tokens.at(static_cast<std::size_t>(i)));
  if (!plan.audio.empty()) {
    const Matrix patches = patchify_audio(t.spectrogram, c.data.time_bins, c.data.freq_bins, c.patch.audio_patch);
    targets.audio.resize(static_cast<Eigen::Index>(plan.audio.size()), patches.cols());
    for (std::size_t i = 0; i < plan.audio.size(); ++i)
      targets.audio.row(static_cast<Eigen::Index>(i)) = patches.row(plan.audio[i]);
  }
  return targets;
}

LocalLoss local_loss(Tape& tape, const MaskedPredictions& predictions, const LocalTargets& targets) {
  auto zero = [&] { return tape.constant(Matrix::Zero(1, 1)); };
  LocalLoss loss;
  if (predictions.audio.has_value() != (targets.audio.rows() > 0) ||
      predictions.video.has_value() != (targets.video.rows() > 0) ||
      predictions.text.has_value() != !targets.text.empty())
    throw ValidationError("local_loss: predictions and targets disagree on masked modalities");
  loss.audio = predictions.audio ? mse(*predictions.audio, targets.audio) : zero();
  loss.video = predictions.video ? mse(*predictions.video, targets.video) : zero();
  loss.text = predictions.text ? cross_entropy_rows(*predictions.text, targets.text) : zero();
  loss.total = add(add(loss.audio, loss.video), loss.text);
  return loss;
}

}  // namespace vlsa
