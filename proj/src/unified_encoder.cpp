#include "vlsa/unified_encoder.hpp"

#include <cmath>
#include <limits>

#include "vlsa/error.hpp"

namespace vlsa {

Matrix modality_attention_mask(const Segments& segments, ModalitySet joint) {
  if (joint == ModalitySet::all()) return Matrix();
  const ModalityKind kinds[] = {ModalityKind::video, ModalityKind::text, ModalityKind::audio};
  const int L = segments.total();
  std::vector<int> group(static_cast<std::size_t>(L));
  for (int k = 0; k < 3; ++k) {
    const Segment& s = segments.of(kinds[k]);
    const int g = (joint.count() >= 2 && joint.contains(kinds[k])) ? 0 : k + 1;
    for (int i = s.begin; i < s.end(); ++i) group[static_cast<std::size_t>(i)] = g;
  }
  Matrix mask(L, L);
  const double ninf = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j) mask(i, j) = group[static_cast<std::size_t>(i)] == group[static_cast<std::size_t>(j)] ? 0.0 : ninf;
  return mask;
}

void register_block_params(ParamInit& init, const std::string& prefix, int dim, int mlp_ratio) {
  init.layer_norm(prefix + ".ln1", dim);
  init.linear(prefix + ".attn.q", dim, dim);
  init.linear(prefix + ".attn.k", dim, dim);
  init.linear(prefix + ".attn.v", dim, dim);
  init.linear(prefix + ".attn.o", dim, dim);
  init.layer_norm(prefix + ".ln2", dim);
  init.linear(prefix + ".mlp.fc1", dim, dim * mlp_ratio);
  init.linear(prefix + ".mlp.fc2", dim * mlp_ratio, dim);
}

namespace {

Var linear(Tape& tape, Var x, const std::string& prefix) {
  return add_row(matmul(x, tape.param(prefix + ".w")), tape.param(prefix + ".b"));
}

Var norm(Tape& tape, Var x, const std::string& prefix) {
  return layer_norm(x, tape.param(prefix + ".g"), tape.param(prefix + ".b"));
}

}  // namespace

Var transformer_block(Tape& tape, Var x, const std::string& prefix, int heads, const Matrix* attention_mask,
                      AttentionTrace* trace) {
  const Eigen::Index dim = x.cols();
  if (dim % heads != 0) throw ValidationError("transformer_block: heads must divide the width");
  const Eigen::Index head_dim = dim / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Matrix* mask = (attention_mask && attention_mask->size() > 0) ? attention_mask : nullptr;

  Var h = norm(tape, x, prefix + ".ln1");
  Var q = linear(tape, h, prefix + ".attn.q");
  Var k = linear(tape, h, prefix + ".attn.k");
  Var v = linear(tape, h, prefix + ".attn.v");
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int hd = 0; hd < heads; ++hd) {
    Var qh = slice_cols(q, hd * head_dim, head_dim);
    Var kh = slice_cols(k, hd * head_dim, head_dim);
    Var vh = slice_cols(v, hd * head_dim, head_dim);
    Var p = softmax_rows(scale(matmul_nt(qh, kh), scale_factor), mask);
    if (trace) trace->probs.push_back(p.value());
    outs.push_back(matmul(p, vh));
  }
  Var attn = heads == 1 ? outs.front() : concat_cols(outs);
  Var x1 = add(x, linear(tape, attn, prefix + ".attn.o"));
  Var m = linear(tape, gelu(linear(tape, norm(tape, x1, prefix + ".ln2"), prefix + ".mlp.fc1")), prefix + ".mlp.fc2");
  return add(x1, m);
}

void register_encoder_params(ParamStore& store, const ModelConfig& c, CounterRng& rng) {
  ParamInit init(store, rng);
  for (int l = 0; l < c.encoder.layers; ++l)
    register_block_params(init, "enc." + std::to_string(l), c.encoder.dim, c.encoder.mlp_ratio);
  init.layer_norm("enc.norm", c.encoder.dim);
}

Var encode(Tape& tape, Var x, const ModelConfig& c, const Matrix* attention_mask, AttentionTrace* trace) {
  if (x.cols() != c.encoder.dim)
    throw ValidationError("encode: sequence width " + std::to_string(x.cols()) + " does not match model dim " +
                          std::to_string(c.encoder.dim));
  if (attention_mask && attention_mask->size() > 0 &&
      (attention_mask->rows() != x.rows() || attention_mask->cols() != x.rows()))
    throw ValidationError("encode: attention mask shape does not match sequence length");
  if (trace) {
    trace->heads = c.encoder.heads;
    trace->probs.clear();
  }
  Var h = x;
  for (int l = 0; l < c.encoder.layers; ++l)
    h = transformer_block(tape, h, "enc." + std::to_string(l), c.encoder.heads, attention_mask, trace);
  return norm(tape, h, "enc.norm");
}

RowVector attention_weights(const ParamStore& params, const ModelConfig& c, const Matrix& x, int layer, int head,
                            int query, const Matrix* attention_mask) {
  if (layer < 0 || layer >= c.encoder.layers) throw std::out_of_range("attention_weights: layer out of range");
  if (head < 0 || head >= c.encoder.heads) throw std::out_of_range("attention_weights: head out of range");
  if (query < 0 || query >= x.rows()) throw std::out_of_range("attention_weights: query out of range");
  Tape tape(&params);
  AttentionTrace trace;
  encode(tape, tape.constant(x), c, attention_mask, &trace);
  return trace.at(layer, head).row(query);
}

}  // namespace vlsa
