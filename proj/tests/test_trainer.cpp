#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vlsa/checkpoint.hpp"
#include "vlsa/error.hpp"
#include "vlsa/run_config.hpp"
#include "vlsa/trainer.hpp"

using namespace vlsa;

namespace {

TrainConfig quick(int steps) {
  TrainConfig tc;
  tc.steps = steps;
  tc.batch = 4;
  tc.lr = 1e-3;
  tc.log_interval = 1;
  return tc;
}

Dataset tiny_data(int n, std::uint64_t seed = 3) {
  return generate_synthetic(n, 2, seed, SyntheticMode::correlated, ModelConfig::tiny().data);
}

bool same_params(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].name != b[i].name || a[i].value != b[i].value) return false;
  return true;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

TEST_CASE("initialization statistics") {
  const Model a = init_model(ModelConfig::desk(), 5);
  const Model b = init_model(ModelConfig::desk(), 5);
  CHECK(same_params(a.params, b.params));
  CHECK_FALSE(same_params(a.params, init_model(ModelConfig::desk(), 6).params));

  const Matrix& w = a.params.at("enc.0.mlp.fc1.w").value;
  REQUIRE(w.size() >= 10000);
  const double mean = w.mean();
  const double sd = std::sqrt((w.array() - mean).square().sum() / static_cast<double>(w.size() - 1));
  CHECK(std::abs(sd - 0.02) < 0.002);
  CHECK(w.cwiseAbs().maxCoeff() <= 0.06 + 1e-15);
  for (const auto& p : a.params) {
    if (ends_with(p.name, ".b")) CHECK_MESSAGE(p.value.isZero(0.0), p.name);
    if (ends_with(p.name, ".g")) CHECK_MESSAGE((p.value.array() == 1.0).all(), p.name);
    if (ends_with(p.name, ".w")) CHECK_MESSAGE(p.decay, p.name);
    else CHECK_MESSAGE(!p.decay, p.name);
  }
}

TEST_CASE("adam step on a one-parameter probe matches the closed form") {
  ParamStore store;
  store.add("theta", Matrix::Constant(1, 1, 1.0), true);
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  AdamState state = AdamState::zeros(store);
  // f(theta) = (theta - 3)^2.
  auto grad = [&] {
    Tape tape(&store);
    Var d = sub(tape.param("theta"), tape.constant(Matrix::Constant(1, 1, 3.0)));
    tape.backward(hadamard(d, d));
    return tape.take_param_grads();
  };
  double theta = 1.0;
  const double g1 = 2.0 * (theta - 3.0);
  adamw_update(store, grad(), state, cfg, cfg.lr);
  // First step: m_hat = g, v_hat = g^2, so the move is lr * sign(g) up to eps.
  theta = theta * (1.0 - 0.1 * 0.01) - 0.1 * g1 / (std::abs(g1) + 1e-8);
  CHECK(store.at("theta").value(0, 0) == doctest::Approx(theta).epsilon(1e-14));

  const double g2 = 2.0 * (theta - 3.0);
  adamw_update(store, grad(), state, cfg, cfg.lr);
  const double m = 0.9 * 0.1 * g1 + 0.1 * g2;
  const double v = 0.999 * 0.001 * g1 * g1 + 0.001 * g2 * g2;
  const double m_hat = m / (1.0 - 0.81), v_hat = v / (1.0 - 0.999 * 0.999);
  theta = theta * (1.0 - 0.001) - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
  CHECK(store.at("theta").value(0, 0) == doctest::Approx(theta).epsilon(1e-14));
  CHECK(state.step == 2);
}

TEST_CASE("weight decay only touches flagged tensors and empty gradients decay the moments") {
  ParamStore store;
  store.add("w", Matrix::Constant(1, 1, 2.0), true);
  store.add("b", Matrix::Constant(1, 1, 2.0), false);
  TrainConfig cfg;
  cfg.weight_decay = 0.5;
  AdamState state = AdamState::zeros(store);
  adamw_update(store, Gradients{}, state, cfg, 0.1);
  CHECK(store.at("w").value(0, 0) == doctest::Approx(2.0 * 0.95));
  CHECK(store.at("b").value(0, 0) == 2.0);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const Dataset d = tiny_data(4);
  TrainConfig tc = quick(1);
  tc.lr = 0.0;
  tc.weight_decay = 0.0;
  Checkpoint ck = init_checkpoint(ModelConfig::tiny(), tc);
  const ParamStore before = ck.model.params;
  std::vector<const Triplet*> batch;
  for (const auto& t : d.samples) batch.push_back(&t);
  train_step(ck.model, ck.adam, {batch}, 0, tc);
  CHECK(same_params(before, ck.model.params));
}

TEST_CASE("logged losses satisfy the decomposition identity") {
  const Dataset d = tiny_data(8);
  TrainConfig tc = quick(4);
  std::vector<StepRecord> records;
  pretrain(d, ModelConfig::tiny(), tc, [&](const StepRecord& r) { records.push_back(r); });
  REQUIRE(records.size() == 4);
  for (const auto& r : records) {
    const auto& l = r.losses;
    CHECK(std::abs(l.total - (l.loss_a + l.loss_v + l.loss_t + tc.lambda * l.global)) < 1e-6);
    CHECK(l.loss_a >= 0.0);
    CHECK(l.loss_v >= 0.0);
    CHECK(l.loss_t >= 0.0);
    CHECK(l.global > 0.0);
  }
  CHECK(records.back().step == 4);
  const auto j = to_json(records.front());
  for (const char* key : {"step", "loss_a", "loss_v", "loss_t", "L_global", "total", "wall_s"}) CHECK(j.contains(key));
}

TEST_CASE("zero steps return the initialization") {
  const Dataset d = tiny_data(4);
  TrainConfig tc = quick(0);
  const Checkpoint ck = pretrain(d, ModelConfig::tiny(), tc);
  CHECK(ck.step == 0);
  CHECK(same_params(ck.model.params, init_model(ModelConfig::tiny(), tc.seed).params));
  CHECK(ck.adam == AdamState::zeros(ck.model.params));
}

TEST_CASE("training is reproducible and independent of the thread count") {
  const Dataset d = tiny_data(8);
  TrainConfig tc = quick(3);
  const Checkpoint a = pretrain(d, ModelConfig::tiny(), tc);
  const Checkpoint b = pretrain(d, ModelConfig::tiny(), tc);
  CHECK(same_params(a.model.params, b.model.params));
  tc.threads = 3;
  const Checkpoint c = pretrain(d, ModelConfig::tiny(), tc);
  CHECK(same_params(a.model.params, c.model.params));
  CHECK(a.adam == c.adam);
  tc.seed = 1;
  CHECK_FALSE(same_params(a.model.params, pretrain(d, ModelConfig::tiny(), tc).model.params));
}

TEST_CASE("training reduces the loss on a small correlated set") {
  const Dataset d = tiny_data(8);
  TrainConfig tc = quick(60);
  tc.batch = 8;
  std::vector<double> totals;
  pretrain(d, ModelConfig::tiny(), tc, [&](const StepRecord& r) { totals.push_back(r.losses.total); });
  REQUIRE(totals.size() == 60);
  CHECK(totals.back() < totals.front());
}

TEST_CASE("gradient accumulation and warmup run") {
  const Dataset d = tiny_data(8);
  TrainConfig tc = quick(2);
  tc.accum_steps = 2;
  tc.warmup_steps = 4;
  CHECK(learning_rate(tc, 0) == doctest::Approx(tc.lr / 4));
  CHECK(learning_rate(tc, 3) == doctest::Approx(tc.lr));
  CHECK(learning_rate(tc, 10) == tc.lr);
  const Checkpoint ck = pretrain(d, ModelConfig::tiny(), tc);
  CHECK(ck.step == 2);
  CHECK(ck.adam.step == 2);
}

TEST_CASE("batches are permutation slices of each epoch") {
  std::set<std::size_t> seen;
  for (int s = 0; s < 3; ++s) {
    const auto idx = batch_indices(12, 4, 9, s);
    REQUIRE(idx.size() == 4);
    seen.insert(idx.begin(), idx.end());
  }
  CHECK(seen.size() == 12);
  CHECK(batch_indices(12, 4, 9, 5) == batch_indices(12, 4, 9, 5));
  CHECK(batch_indices(3, 8, 0, 0).size() == 3);
  CHECK_THROWS_AS(batch_indices(0, 8, 0, 0), ValidationError);
}

TEST_CASE("non-finite losses name the component") {
  LossBreakdown l;
  l.loss_v = std::nan("");
  CHECK_THROWS_WITH_AS(check_finite(l, 7), doctest::Contains("loss_v"), NumericError);
  CHECK_THROWS_WITH_AS(check_finite(l, 7), doctest::Contains("step 7"), NumericError);
  l.loss_v = 0.0;
  l.global = INFINITY;
  CHECK_THROWS_WITH_AS(check_finite(l, 1), doctest::Contains("L_global"), NumericError);

  const Dataset d = tiny_data(4);
  TrainConfig tc = quick(1);
  Checkpoint ck = init_checkpoint(ModelConfig::tiny(), tc);
  ck.model.params.at("dec.head.audio.b").value(0, 0) = INFINITY;
  std::vector<const Triplet*> batch;
  for (const auto& t : d.samples) batch.push_back(&t);
  CHECK_THROWS_WITH_AS(train_step(ck.model, ck.adam, {batch}, 0, tc), doctest::Contains("loss_a"), NumericError);
}

TEST_CASE("finite differences are exact on a linear probe") {
  ParamStore store;
  CounterRng rng(1);
  Matrix w(3, 2), x(4, 3), c(4, 2);
  for (Matrix* m : {&w, &x, &c})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.normal();
  store.add("w", w, true);
  auto loss = [&] { return (x * store.at("w").value).cwiseProduct(c).sum(); };
  Tape tape(&store);
  tape.backward(sum_all(hadamard(matmul(tape.constant(x), tape.param("w")), tape.constant(c))));
  double worst = 0.0;
  for (Eigen::Index k = 0; k < 6; ++k) {
    const double numeric = oracle::central_difference(loss, store[0].value.data()[k], 1e-5);
    const double analytic = tape.param_grads()[0].data()[k];
    worst = std::max(worst, std::abs(analytic - numeric) / std::max(std::abs(analytic), 1e-4));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("gradient check on the tiny model and isolated paths") {
  GradcheckOptions opts;
  opts.max_entries = 12;
  TrainConfig tc;
  tc.batch = 3;
  const GradcheckResult full = gradcheck(ModelConfig::tiny(), tc, 1, opts);
  CHECK(full.checked > 300);
  CHECK_MESSAGE(full.max_rel_error < 1e-4, full.worst_param);

  TrainConfig local = tc;
  local.lambda = 0.0;
  CHECK(gradcheck(ModelConfig::tiny(), local, 2, opts).max_rel_error < 1e-4);

  TrainConfig global = tc;
  global.lpmm = false;
  CHECK(gradcheck(ModelConfig::tiny(), global, 3, opts).max_rel_error < 1e-4);

  TrainConfig vtm = tc;
  vtm.gam = false;
  vtm.vtm = true;
  CHECK(gradcheck(ModelConfig::tiny(), vtm, 4, opts).max_rel_error < 1e-4);
}

TEST_CASE("isolated paths really isolate") {
  const Dataset d = tiny_data(3);
  std::vector<const Triplet*> batch;
  for (const auto& t : d.samples) batch.push_back(&t);
  const Model m = init_model(ModelConfig::tiny(), 1);
  TrainConfig tc;
  const StepPlan plan = draw_step_plan(m.config, tc, batch, 0);
  TrainConfig local = tc;
  local.lambda = 0.0;
  const BatchResult rl = batch_loss(m, batch, plan, local, true);
  CHECK(rl.losses.total == doctest::Approx(rl.losses.loss_a + rl.losses.loss_v + rl.losses.loss_t));
  // Matching heads only receive gradient through the global loss.
  CHECK(rl.grads[m.params.id("match.av.w")].norm() == 0.0);
  TrainConfig global = tc;
  global.lpmm = false;
  const BatchResult rg = batch_loss(m, batch, plan, global, true);
  CHECK(rg.losses.loss_a == 0.0);
  CHECK(rg.losses.total == doctest::Approx(tc.lambda * rg.losses.global));
  const auto& head = rg.grads[m.params.id("dec.head.audio.w")];
  CHECK((head.size() == 0 || head.norm() == 0.0));
}

TEST_CASE("checkpoint round trip is exact") {
  testutil::TempDir dir;
  const Dataset d = tiny_data(4);
  TrainConfig tc = quick(2);
  const Checkpoint ck = pretrain(d, ModelConfig::tiny(), tc);
  save_checkpoint(ck, dir / "a.ck");
  const Checkpoint back = load_checkpoint(dir / "a.ck");
  CHECK(back.step == ck.step);
  CHECK(back.train == ck.train);
  CHECK(back.model.config == ck.model.config);
  CHECK(back.rng.key() == ck.rng.key());
  CHECK(back.rng.counter() == ck.rng.counter());
  CHECK(back.adam == ck.adam);
  CHECK(same_params(back.model.params, ck.model.params));
  for (std::size_t i = 0; i < ck.model.params.size(); ++i) CHECK(back.model.params[i].decay == ck.model.params[i].decay);
  save_checkpoint(back, dir / "b.ck");
  CHECK(testutil::read_file(dir / "a.ck") == testutil::read_file(dir / "b.ck"));
  CHECK(checkpoint_id(dir / "a.ck") == checkpoint_id(dir / "b.ck"));
  CHECK(checkpoint_id(dir / "a.ck").size() == 16);
  CHECK(testutil::read_file(dir / "a.ck").substr(0, 4) == "VLCK");

  const GlobalRows x = embed_globals(ck.model, d.samples[0]);
  const GlobalRows y = embed_globals(back.model, d.samples[0]);
  CHECK(x.video == y.video);
  CHECK(x.text == y.text);
  CHECK(x.audio == y.audio);
}

TEST_CASE("damaged checkpoints are reported with the path") {
  testutil::TempDir dir;
  const Checkpoint ck = init_checkpoint(ModelConfig::tiny(), quick(0));
  save_checkpoint(ck, dir / "c.ck");
  std::string bytes = testutil::read_file(dir / "c.ck");
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "missing.ck"), doctest::Contains("missing.ck"), IoError);
  testutil::write_file(dir / "magic.ck", "XXXX" + bytes.substr(4));
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "magic.ck"), doctest::Contains("magic.ck"), IoError);
  testutil::write_file(dir / "short.ck", bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "short.ck"), doctest::Contains("short.ck"), IoError);
}

TEST_CASE("train configuration parsing") {
  const TrainConfig tc = quick(5);
  CHECK(train_config_from_json(to_json(tc), TrainConfig{}) == tc);
  CHECK_THROWS_WITH_AS(train_config_from_json(nlohmann::json{{"stepz", 1}}, tc), doctest::Contains("train.stepz"),
                       ValidationError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"vtm", true}}, tc), ValidationError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"batch", 0}}, tc), ValidationError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"lr", "fast"}}, tc), ValidationError);
  CHECK(TrainConfig::paper().steps == 200000);
  CHECK(TrainConfig::paper().batch == 2048);
  CHECK(TrainConfig::desk().steps == 2000);
  CHECK(TrainConfig::desk().batch == 8);
  CHECK(TrainConfig::desk().lr == 1e-4);
  CHECK(TrainConfig::desk().weight_decay == 0.01);
  CHECK(TrainConfig::desk().lambda == 5.0);
}

TEST_CASE("run configuration documents") {
  const RunConfig desk = preset_run_config("desk");
  CHECK(run_config_from_json(to_json(desk)) == desk);
  const RunConfig tiny = run_config_from_json(nlohmann::json{{"preset", "tiny"}, {"train", {{"steps", 3}}}});
  CHECK(tiny.model == ModelConfig::tiny());
  CHECK(tiny.train.steps == 3);
  CHECK(run_config_from_json(to_json(tiny)) == tiny);
  CHECK_THROWS_WITH_AS(run_config_from_json(nlohmann::json{{"optim", {}}}), doctest::Contains("optim"),
                       ValidationError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"preset", "huge"}}), ValidationError);
  const RunConfig joint =
      run_config_from_json(nlohmann::json{{"train", {{"joint_encoder_modalities", "va"}}}});
  CHECK(joint.eval.joint == ModalitySet::parse("va"));
  testutil::TempDir dir;
  CHECK_THROWS_AS(load_run_config(dir / "none.json"), IoError);
  testutil::write_file(dir / "bad.json", "{");
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ValidationError);
}

TEST_CASE("ablation variants and a single-row table") {
  CHECK_FALSE(parse_ablation_variant("neither").lpmm);
  CHECK_FALSE(parse_ablation_variant("neither").gam);
  CHECK_FALSE(parse_ablation_variant("gam").lpmm);
  CHECK(parse_ablation_variant("vtm").vtm);
  CHECK_FALSE(parse_ablation_variant("vtm").gam);
  CHECK(parse_ablation_variant("joint=va").joint == ModalitySet::parse("va"));
  CHECK(parse_ablation_variant("shared=").shared_decoder == ModalitySet::none());
  CHECK_THROWS_AS(parse_ablation_variant("bogus"), ValidationError);

  const Dataset train = tiny_data(4, 1), test = tiny_data(4, 2);
  const auto rows = run_ablation(train, test, ModelConfig::tiny(), quick(2), {parse_ablation_variant("full")});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].t2v.batch == 4);
  CHECK(rows[0].t2a.ks == std::vector<int>{1, 5, 10, 50});
  const std::string table = ablation_table(rows);
  CHECK(table.find("full") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 2);

  const auto pair = run_ablation(train, test, ModelConfig::tiny(), quick(2),
                                 {parse_ablation_variant("gam"), parse_ablation_variant("vtm")});
  REQUIRE(pair.size() == 2);
  CHECK(pair[0].final_losses.global > 0.0);
  CHECK(pair[1].final_losses.global > 0.0);
}
