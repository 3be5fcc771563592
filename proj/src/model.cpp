#include "vlsa/model.hpp"

#include "vlsa/unified_encoder.hpp"

namespace vlsa {

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  CounterRng rng(seed);
  register_embedder_params(m.params, config, rng);
  register_encoder_params(m.params, config, rng);
  register_decoder_params(m.params, config, rng);
  register_matching_params(m.params, config, rng);
  return m;
}

SampleOutputs forward_sample(Tape& tape, const Model& model, const Triplet& t, const ForwardOptions& opts) {
  const ModelConfig& c = model.config;
  SampleOutputs out;
  EmbedOptions eo;
  eo.mask = opts.mask;
  eo.zero_content = opts.zero_content;
  out.sequence = embed_triplet(tape, t, c, eo);
  const Matrix attn_mask = modality_attention_mask(out.sequence.segments, opts.joint);
  out.encoded = encode(tape, out.sequence.embeddings, c, attn_mask.size() ? &attn_mask : nullptr);
  out.globals = pool_global(out.encoded, out.sequence.segments, out.sequence.text_pad);
  if (opts.mask) {
    MaskedPredictions preds = decode_masked(tape, out.encoded, out.sequence.segments, *opts.mask, c);
    out.local = local_loss(tape, preds, local_targets(t, *opts.mask, c));
  }
  return out;
}

GlobalRows embed_globals(const Model& model, const Triplet& t, const ForwardOptions& opts) {
  Tape tape(&model.params, false);
  ForwardOptions o = opts;
  o.mask = nullptr;
  SampleOutputs s = forward_sample(tape, model, t, o);
  return GlobalRows{s.globals.video.value(), s.globals.text.value(), s.globals.audio.value()};
}

}  // namespace vlsa
