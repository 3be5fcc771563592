#include "vlsa/global_matching.hpp"

#include <numeric>

#include "vlsa/error.hpp"
#include "vlsa/param_init.hpp"

namespace vlsa {

GlobalEmbeddings pool_global(Var encoded, const Segments& segments, const std::vector<bool>& text_pad) {
  if (encoded.rows() != segments.total()) throw ValidationError("pool_global: sequence length mismatch");
  if (static_cast<int>(text_pad.size()) != segments.text.length)
    throw ValidationError("pool_global: text PAD flags do not match the text segment");
  std::vector<int> text_rows;
  for (int i = 0; i < segments.text.length; ++i)
    if (!text_pad[static_cast<std::size_t>(i)]) text_rows.push_back(segments.text.begin + i);
  if (text_rows.empty()) throw ValidationError("pool_global: caption has only PAD tokens");
  GlobalEmbeddings g;
  g.video = mean_rows(slice_rows(encoded, segments.video.begin, segments.video.length));
  g.text = mean_rows(gather_rows(encoded, text_rows));
  g.audio = mean_rows(slice_rows(encoded, segments.audio.begin, segments.audio.length));
  return g;
}

Var contrastive_logits(Var a, Var b, double tau) {
  if (!(tau > 0.0)) throw ValidationError("contrastive loss: temperature must be positive");
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ValidationError("contrastive loss: batch shape mismatch");
  return scale(matmul_nt(l2_normalize_rows(a), l2_normalize_rows(b)), 1.0 / tau);
}

Var contrastive_loss(Var a, Var b, double tau) {
  Var logits = contrastive_logits(a, b, tau);
  std::vector<int> targets(static_cast<std::size_t>(a.rows()));
  std::iota(targets.begin(), targets.end(), 0);
  return cross_entropy_rows(logits, targets);
}

Var symmetric_contrastive_loss(Var a, Var b, double tau) {
  return add(contrastive_loss(a, b, tau), contrastive_loss(b, a, tau));
}

std::vector<MatchPair> sample_match_pairs(int batch, CounterRng& rng) {
  std::vector<MatchPair> pairs;
  for (int i = 0; i < batch; ++i) pairs.push_back({i, i, 1.0});
  if (batch < 2) return pairs;
  for (int i = 0; i < batch; ++i) {
    int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(batch - 1)));
    if (j >= i) ++j;
    pairs.push_back({i, j, 0.0});
  }
  return pairs;
}

Var matching_loss(Tape& tape, Var a, Var b, const std::vector<MatchPair>& pairs, const std::string& head) {
  if (pairs.empty()) return tape.constant(Matrix::Zero(1, 1));
  std::vector<int> first, second;
  std::vector<double> labels;
  for (const auto& p : pairs) {
    if (p.label != 0.0 && p.label != 1.0) throw ValidationError("matching loss: labels must be 0 or 1");
    first.push_back(p.first);
    second.push_back(p.second);
    labels.push_back(p.label);
  }
  const Var cols[] = {gather_rows(a, first), gather_rows(b, second)};
  Var logits = add_row(matmul(concat_cols(cols), tape.param(head + ".w")), tape.param(head + ".b"));
  return bce_with_logits_sum(logits, labels);
}

MatchingPlan draw_matching_plan(int batch, CounterRng& rng) {
  MatchingPlan plan;
  CounterRng av = rng.split(0), at = rng.split(1), vt = rng.split(2);
  plan.audio_video = sample_match_pairs(batch, av);
  plan.audio_text = sample_match_pairs(batch, at);
  plan.video_text = sample_match_pairs(batch, vt);
  return plan;
}

void register_matching_params(ParamStore& store, const ModelConfig& c, CounterRng& rng) {
  ParamInit init(store, rng);
  for (const char* h : {"match.av", "match.at", "match.vt"}) init.linear(h, 2 * c.encoder.dim, 1);
}

Var global_loss(Tape& tape, Var video, Var text, Var audio, const MatchingPlan& plan, const GlobalLossConfig& cfg) {
  Var av = symmetric_contrastive_loss(audio, video, cfg.temperature);
  Var at = symmetric_contrastive_loss(audio, text, cfg.temperature);
  if (cfg.matching) {
    av = add(av, matching_loss(tape, audio, video, plan.audio_video, "match.av"));
    at = add(at, matching_loss(tape, audio, text, plan.audio_text, "match.at"));
  }
  return add(av, at);
}

Var vtm_baseline_loss(Tape& tape, Var video, Var text, const MatchingPlan& plan, const GlobalLossConfig& cfg) {
  Var vt = symmetric_contrastive_loss(video, text, cfg.temperature);
  if (cfg.matching) vt = add(vt, matching_loss(tape, video, text, plan.video_text, "match.vt"));
  return vt;
}

Var total_loss(Var local_total, Var global, double lambda) {
  if (!(lambda >= 0.0)) throw ValidationError("total loss: lambda must be non-negative");
  return add(local_total, scale(global, lambda));
}

}  // namespace vlsa
