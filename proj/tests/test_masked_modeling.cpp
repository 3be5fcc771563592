#include <doctest.h>

#include <array>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "vlsa/error.hpp"
#include "vlsa/model.hpp"
#include "vlsa/unified_encoder.hpp"

using namespace vlsa;

namespace {

Triplet sample(const ModelConfig& c, std::uint64_t seed) {
  return generate_synthetic(1, 2, seed, SyntheticMode::correlated, c.data).samples[0];
}

// Encoded sequence and predictions for `plan`, evaluated on `tape`.
MaskedPredictions run(Tape& tape, const Model& m, const Triplet& t, const MaskPlan& plan, Matrix* encoded = nullptr) {
  EmbedOptions eo;
  eo.mask = &plan;
  PatchSequence seq = embed_triplet(tape, t, m.config, eo);
  Var enc = encode(tape, seq.embeddings, m.config);
  if (encoded) *encoded = enc.value();
  return decode_masked(tape, enc, seq.segments, plan, m.config);
}

Matrix value_or_empty(const std::optional<Var>& v) { return v ? v->value() : Matrix(); }

}  // namespace

TEST_CASE("mask counts for the full-size configuration") {
  const ModelConfig c = ModelConfig::paper();
  const MaskPlan plan = make_mask_plan(c, 40, 7, 3);
  CHECK(plan.audio.size() == 192);
  CHECK(plan.video.size() == 1176);
  CHECK(plan.text.size() == 6);
  for (int f = 0; f < 8; ++f) {
    const auto n = std::count_if(plan.video.begin(), plan.video.end(), [&](int i) { return i / 196 == f; });
    CHECK(n == 147);
  }
  CHECK_NOTHROW(check_mask_plan(plan, make_segments(c)));
}

TEST_CASE("mask plans are deterministic per seed and sample and stay off PAD") {
  const ModelConfig c = ModelConfig::desk();
  CHECK(make_mask_plan(c, 5, 1, 2) == make_mask_plan(c, 5, 1, 2));
  CHECK_FALSE(make_mask_plan(c, 5, 1, 2) == make_mask_plan(c, 5, 1, 3));
  CHECK_FALSE(make_mask_plan(c, 5, 1, 2) == make_mask_plan(c, 5, 2, 2));
  for (std::uint64_t id = 0; id < 50; ++id) {
    const MaskPlan p = make_mask_plan(c, 5, 9, id);
    REQUIRE(p.text.size() == 1);
    CHECK(p.text[0] < 5);
  }
  CHECK(masked_count(0.15, 8) == 1);
  CHECK(masked_count(0.15, 10) == 2);
  CHECK(masked_count(0.75, 2) == 2);
  CHECK(make_mask_plan(c, 0, 1, 1).text.empty());
}

TEST_CASE("mask plan sampling is roughly uniform over positions") {
  const ModelConfig c = ModelConfig::desk();
  const int n = c.patch.audio_patches(c.data);
  std::vector<int> hits(static_cast<std::size_t>(n));
  const int trials = 2000;
  for (int s = 0; s < trials; ++s)
    for (int i : make_mask_plan(c, 4, 5, static_cast<std::uint64_t>(s)).audio) ++hits[static_cast<std::size_t>(i)];
  const double expected = trials * 0.75;
  for (int h : hits) CHECK(std::abs(h - expected) < 5.0 * std::sqrt(expected * 0.25));
}

TEST_CASE("invalid plans are rejected") {
  const Segments s = make_segments(ModelConfig::tiny());
  MaskPlan p;
  p.text = {2, 1};
  CHECK_THROWS_AS(check_mask_plan(p, s), ValidationError);
  p.text = {1, 1};
  CHECK_THROWS_AS(check_mask_plan(p, s), ValidationError);
  p.text = {};
  p.audio = {s.audio.length};
  CHECK_THROWS_AS(check_mask_plan(p, s), ValidationError);
}

TEST_CASE("zero decoder weights give zero predictions") {
  Model m = init_model(ModelConfig::tiny(), 1);
  for (auto& p : m.params)
    if (p.name.rfind("dec.", 0) == 0) p.value.setZero();
  const Triplet t = sample(m.config, 1);
  const MaskPlan plan = make_mask_plan(m.config, effective_length(t), 1, 0);
  Tape tape(&m.params, false);
  const MaskedPredictions preds = run(tape, m, t, plan);
  REQUIRE(preds.audio);
  REQUIRE(preds.video);
  CHECK(preds.audio->value().isZero(0.0));
  CHECK(preds.video->value().isZero(0.0));
  if (preds.text) CHECK(preds.text->value().isZero(0.0));
}

TEST_CASE("prediction shapes and an empty audio mask") {
  const Model m = init_model(ModelConfig::tiny(), 2);
  const Triplet t = sample(m.config, 2);
  MaskPlan plan = make_mask_plan(m.config, effective_length(t), 2, 0);
  plan.audio.clear();
  Tape tape(&m.params, false);
  const MaskedPredictions preds = run(tape, m, t, plan);
  CHECK_FALSE(preds.audio.has_value());
  REQUIRE(preds.video);
  CHECK(preds.video->rows() == static_cast<Eigen::Index>(plan.video.size()));
  CHECK(preds.video->cols() == 3 * 4 * 4);
  if (preds.text) CHECK(preds.text->cols() == m.config.data.vocab_size);
  const LocalLoss loss = local_loss(tape, preds, local_targets(t, plan, m.config));
  CHECK(loss.audio.scalar() == 0.0);
  CHECK(loss.total.scalar() == doctest::Approx(loss.video.scalar() + loss.text.scalar()).epsilon(1e-15));
}

TEST_CASE("decoder predictions match a straight-line oracle") {
  const Model m = init_model(ModelConfig::tiny(), 3);
  const Triplet t = sample(m.config, 3);
  const MaskPlan plan = make_mask_plan(m.config, effective_length(t), 3, 0);
  Tape tape(&m.params, false);
  Matrix encoded;
  const MaskedPredictions preds = run(tape, m, t, plan, &encoded);
  const Segments s = make_segments(m.config);

  auto p = [&](const std::string& n) { return oracle::from(m.params.at(n).value); };
  oracle::Grid h = oracle::linear(oracle::from(encoded), p("dec.shared.in.w"), p("dec.shared.in.b"));
  for (int l = 0; l < m.config.decoder.layers; ++l)
    h = oracle::block(h, p, "dec.shared." + std::to_string(l), m.config.decoder_heads());
  h = oracle::layer_norm(h, p("dec.shared.norm.g"), p("dec.shared.norm.b"));

  auto check_head = [&](const Var& pred, const std::vector<int>& idx, int offset, const std::string& head) {
    oracle::Grid rows;
    for (int i : idx) rows.push_back(h[static_cast<std::size_t>(i + offset)]);
    const oracle::Grid expected = oracle::linear(rows, p(head + ".w"), p(head + ".b"));
    double worst = 0.0;
    for (std::size_t r = 0; r < expected.size(); ++r)
      for (std::size_t c = 0; c < expected[r].size(); ++c)
        worst = std::max(worst, std::abs(expected[r][c] - pred.value()(static_cast<long>(r), static_cast<long>(c))));
    CHECK(worst < 1e-6);
  };
  check_head(*preds.video, plan.video, s.video.begin, "dec.head.video");
  check_head(*preds.audio, plan.audio, s.audio.begin, "dec.head.audio");
  if (preds.text) check_head(*preds.text, plan.text, s.text.begin, "dec.head.text");
}

TEST_CASE("local loss closed forms") {
  Tape tape;
  Matrix target(2, 3);
  target << 1, 2, 3, -1, 0, 4;
  Matrix logits = Matrix::Zero(2, 10);
  MaskedPredictions preds;
  LocalTargets targets;
  targets.audio = target;
  targets.video = target;
  targets.text = {3, 7};
  preds.audio = tape.constant(target);
  preds.video = tape.constant(target);
  logits(0, 3) = logits(1, 7) = 60.0;
  preds.text = tape.constant(logits);
  LocalLoss perfect = local_loss(tape, preds, targets);
  CHECK(perfect.audio.scalar() == 0.0);
  CHECK(perfect.video.scalar() == 0.0);
  CHECK(perfect.text.scalar() < 1e-20);

  preds.audio = tape.constant((target.array() + 1.0).matrix());
  preds.text = tape.constant(Matrix::Zero(2, 10));
  LocalLoss off = local_loss(tape, preds, targets);
  CHECK(off.audio.scalar() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(off.text.scalar() == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(off.text.scalar() == doctest::Approx(2.3026).epsilon(1e-4));
  CHECK(off.total.scalar() == doctest::Approx(1.0 + std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("local loss ignores the order of masked indices") {
  const Model m = init_model(ModelConfig::tiny(), 4);
  const Triplet t = sample(m.config, 4);
  const MaskPlan plan = make_mask_plan(m.config, effective_length(t), 4, 0);
  Tape tape(&m.params, false);
  const MaskedPredictions preds = run(tape, m, t, plan);
  const LocalTargets targets = local_targets(t, plan, m.config);
  const double base = local_loss(tape, preds, targets).total.scalar();

  auto reversed = [](int n) {
    std::vector<int> r(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] = n - 1 - i;
    return r;
  };
  MaskedPredictions perm;
  LocalTargets ptargets;
  const auto rv = reversed(static_cast<int>(plan.video.size()));
  const auto ra = reversed(static_cast<int>(plan.audio.size()));
  perm.video = gather_rows(*preds.video, rv);
  perm.audio = gather_rows(*preds.audio, ra);
  ptargets.video = targets.video.colwise().reverse();
  ptargets.audio = targets.audio.colwise().reverse();
  if (preds.text) {
    const auto rt = reversed(static_cast<int>(plan.text.size()));
    perm.text = gather_rows(*preds.text, rt);
    ptargets.text.assign(targets.text.rbegin(), targets.text.rend());
  }
  CHECK(local_loss(tape, perm, ptargets).total.scalar() == doctest::Approx(base).epsilon(1e-13));
}

TEST_CASE("unmasked target elements do not affect the local loss") {
  const Model m = init_model(ModelConfig::tiny(), 5);
  const Triplet t = sample(m.config, 5);
  const MaskPlan plan = make_mask_plan(m.config, effective_length(t), 5, 0);
  Tape tape(&m.params, false);
  const MaskedPredictions preds = run(tape, m, t, plan);
  const int P = m.config.patch.audio_patch;
  const int per_row = m.config.data.freq_bins / P;
  std::set<int> masked(plan.audio.begin(), plan.audio.end());
  int unmasked_patch = 0;
  while (masked.count(unmasked_patch)) ++unmasked_patch;
  const int masked_patch = plan.audio.front();
  auto element = [&](int patch) {
    const int row = (patch / per_row) * P, col = (patch % per_row) * P;
    return static_cast<std::size_t>(row * m.config.data.freq_bins + col);
  };
  auto loss_with = [&](std::size_t idx, float delta) {
    Triplet u = t;
    u.spectrogram[idx] += delta;
    return local_loss(tape, preds, local_targets(u, plan, m.config)).audio.scalar();
  };
  const std::size_t free_idx = element(unmasked_patch);
  const double probe = (loss_with(free_idx, 1e-3f) - loss_with(free_idx, -1e-3f)) / 2e-3;
  CHECK(probe == 0.0);
  const std::size_t hit_idx = element(masked_patch);
  CHECK(loss_with(hit_idx, 1e-3f) != loss_with(hit_idx, -1e-3f));
}

TEST_CASE("the shared trunk is one storage while heads are separate") {
  const Model base = init_model(ModelConfig::tiny(), 6);
  const Triplet t = sample(base.config, 6);
  const MaskPlan plan = make_mask_plan(base.config, effective_length(t), 6, 0);
  auto predict = [&](const Model& m) {
    Tape tape(&m.params, false);
    MaskedPredictions p = run(tape, m, t, plan);
    return std::array<Matrix, 3>{value_or_empty(p.video), value_or_empty(p.text), value_or_empty(p.audio)};
  };
  const auto ref = predict(base);
  REQUIRE(ref[1].size() > 0);

  Model trunk = base;
  trunk.params.at("dec.shared.in.w").value.array() += 0.05;
  const auto after_trunk = predict(trunk);
  CHECK(after_trunk[0] != ref[0]);
  CHECK(after_trunk[1] != ref[1]);
  CHECK(after_trunk[2] != ref[2]);

  Model head = base;
  head.params.at("dec.head.audio.w").value.array() += 0.05;
  const auto after_head = predict(head);
  CHECK(after_head[0] == ref[0]);
  CHECK(after_head[1] == ref[1]);
  CHECK(after_head[2] != ref[2]);

  ModelConfig separate = base.config;
  separate.decoder.shared = ModalitySet::none();
  Model sep = init_model(separate, 6);
  CHECK_FALSE(sep.params.contains("dec.shared.in.w"));
  const auto sref = predict(sep);
  sep.params.at("dec.audio.in.w").value.array() += 0.05;
  const auto safter = predict(sep);
  CHECK(safter[0] == sref[0]);
  CHECK(safter[1] == sref[1]);
  CHECK(safter[2] != sref[2]);
}

TEST_CASE("decode rejects a sequence that does not match the layout") {
  const Model m = init_model(ModelConfig::tiny(), 7);
  Tape tape(&m.params, false);
  const Segments s = make_segments(m.config);
  CHECK_THROWS_AS(decode_masked(tape, tape.constant(Matrix::Zero(s.total() - 1, 16)), s, MaskPlan{}, m.config),
                  ValidationError);
}

TEST_CASE("local loss gradients match central differences") {
  Model m = init_model(ModelConfig::tiny(), 8);
  // Nonzero biases and norms so every parameter path is exercised.
  CounterRng noise(81);
  for (auto& p : m.params)
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += 0.05 * noise.normal();
  const Triplet t = sample(m.config, 8);
  const MaskPlan plan = make_mask_plan(m.config, effective_length(t), 8, 0);
  auto loss = [&] {
    Tape tape(&m.params, false);
    const MaskedPredictions preds = run(tape, m, t, plan);
    return local_loss(tape, preds, local_targets(t, plan, m.config)).total.scalar();
  };
  Tape tape(&m.params);
  const MaskedPredictions preds = run(tape, m, t, plan);
  tape.backward(local_loss(tape, preds, local_targets(t, plan, m.config)).total);
  const Gradients g = tape.take_param_grads();
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t id = 0; id < m.params.size(); ++id) {
    auto& value = m.params[id].value;
    const Eigen::Index stride = std::max<Eigen::Index>(1, value.size() / 12);
    for (Eigen::Index k = 0; k < value.size(); k += stride) {
      const double numeric = oracle::central_difference(loss, value.data()[k], 1e-5);
      const double analytic = g[id].size() ? g[id].data()[k] : 0.0;
      worst = std::max(worst, std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-4}));
      ++checked;
    }
  }
  CHECK(checked > 300);
  CHECK(worst < 1e-4);
}
