#include "vlsa/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <sstream>

#include "vlsa/error.hpp"
#include "vlsa/parallel.hpp"

namespace vlsa {

using nlohmann::json;

namespace {

// Independent random streams under the training seed.
constexpr std::uint64_t kPlanStream = 1;
constexpr std::uint64_t kOrderStream = 2;

int get_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ValidationError("train." + key + ": expected an integer");
  return v.get<int>();
}

double get_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw ValidationError("train." + key + ": expected a number");
  return v.get<double>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ValidationError("train." + key + ": expected true or false");
  return v.get<bool>();
}

Matrix stack_rows(const std::vector<Matrix>& rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.front().cols());
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
  return m;
}

}  // namespace

TrainConfig TrainConfig::desk() { return TrainConfig{}; }

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.steps = 200000;
  c.batch = 2048;
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("train." + m); };
  if (steps < 0) fail("steps: must be non-negative");
  if (batch < 1) fail("batch: must be positive");
  if (accum_steps < 1) fail("accum_steps: must be positive");
  if (!(lr >= 0.0)) fail("lr: must be non-negative");
  if (!(weight_decay >= 0.0)) fail("weight_decay: must be non-negative");
  if (!(lambda >= 0.0)) fail("lambda: must be non-negative");
  if (!(temperature > 0.0)) fail("temperature: must be positive");
  if (vtm && gam) fail("vtm: the video-text baseline cannot be combined with gam");
  if (warmup_steps < 0) fail("warmup_steps: must be non-negative");
  if (log_interval < 1) fail("log_interval: must be positive");
  if (threads < 1) fail("threads: must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1: must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2: must be in [0, 1)");
  if (!(eps > 0.0)) fail("eps: must be positive");
}

json to_json(const TrainConfig& c) {
  return json{{"steps", c.steps},
              {"lr", c.lr},
              {"weight_decay", c.weight_decay},
              {"batch", c.batch},
              {"accum_steps", c.accum_steps},
              {"lambda", c.lambda},
              {"temperature", c.temperature},
              {"seed", c.seed},
              {"lpmm", c.lpmm},
              {"gam", c.gam},
              {"vtm", c.vtm},
              {"matching", c.matching},
              {"global_pass", c.global_unmasked ? "unmasked" : "masked"},
              {"joint_encoder_modalities", c.joint.str()},
              {"warmup_steps", c.warmup_steps},
              {"log_interval", c.log_interval},
              {"threads", c.threads},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"eps", c.eps}};
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& base) {
  if (!j.is_object()) throw ValidationError("train section must be an object");
  TrainConfig c = base;
  for (const auto& [key, v] : j.items()) {
    if (key == "steps") c.steps = get_int(v, key);
    else if (key == "lr") c.lr = get_double(v, key);
    else if (key == "weight_decay") c.weight_decay = get_double(v, key);
    else if (key == "batch") c.batch = get_int(v, key);
    else if (key == "accum_steps") c.accum_steps = get_int(v, key);
    else if (key == "lambda") c.lambda = get_double(v, key);
    else if (key == "temperature") c.temperature = get_double(v, key);
    else if (key == "seed") {
      if (!v.is_number_unsigned()) throw ValidationError("train.seed: expected a non-negative integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "lpmm") c.lpmm = get_bool(v, key);
    else if (key == "gam") c.gam = get_bool(v, key);
    else if (key == "vtm") c.vtm = get_bool(v, key);
    else if (key == "matching") c.matching = get_bool(v, key);
    else if (key == "global_pass") {
      const std::string p = v.is_string() ? v.get<std::string>() : "";
      if (p != "unmasked" && p != "masked") throw ValidationError("train.global_pass: expected \"unmasked\" or \"masked\"");
      c.global_unmasked = p == "unmasked";
    }
    else if (key == "joint_encoder_modalities") {
      if (!v.is_string()) throw ValidationError("train." + key + ": expected a string such as \"vta\"");
      c.joint = ModalitySet::parse(v.get<std::string>());
    } else if (key == "warmup_steps") c.warmup_steps = get_int(v, key);
    else if (key == "log_interval") c.log_interval = get_int(v, key);
    else if (key == "threads") c.threads = get_int(v, key);
    else if (key == "beta1") c.beta1 = get_double(v, key);
    else if (key == "beta2") c.beta2 = get_double(v, key);
    else if (key == "eps") c.eps = get_double(v, key);
    else throw ValidationError("train." + key + ": unknown key");
  }
  c.validate();
  return c;
}

AdamState AdamState::zeros(const ParamStore& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    s.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
  return s;
}

void adamw_update(ParamStore& params, const Gradients& grads, AdamState& state, const TrainConfig& cfg, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adamw_update: optimizer state does not match the parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& theta = params[i].value;
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    if (params[i].decay) theta *= 1.0 - lr * cfg.weight_decay;
    if (i < grads.size() && grads[i].size() != 0) {
      const Matrix& g = grads[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    } else {
      m *= cfg.beta1;
      v *= cfg.beta2;
    }
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.eps);
  }
}

double learning_rate(const TrainConfig& cfg, std::int64_t step) {
  if (cfg.warmup_steps <= 0 || step >= cfg.warmup_steps) return cfg.lr;
  return cfg.lr * static_cast<double>(step + 1) / cfg.warmup_steps;
}

StepPlan draw_step_plan(const ModelConfig& mc, const TrainConfig& tc, const std::vector<const Triplet*>& batch,
                        std::int64_t micro_step) {
  const CounterRng root = CounterRng(tc.seed).split(kPlanStream).split(static_cast<std::uint64_t>(micro_step));
  StepPlan plan;
  const std::uint64_t mask_seed = root.split(0).key();
  for (std::size_t i = 0; i < batch.size(); ++i)
    plan.masks.push_back(make_mask_plan(mc, effective_length(*batch[i]), mask_seed, i));
  CounterRng match = root.split(1);
  plan.matching = draw_matching_plan(static_cast<int>(batch.size()), match);
  return plan;
}

BatchResult batch_loss(const Model& model, const std::vector<const Triplet*>& batch, const StepPlan& plan,
                       const TrainConfig& cfg, bool with_gradients) {
  if (batch.empty()) throw ValidationError("batch_loss: empty batch");
  if (cfg.lpmm && plan.masks.size() != batch.size()) throw ValidationError("batch_loss: one mask plan per sample");
  BatchResult r;
  if (!cfg.lpmm && !cfg.global_on()) return r;
  const std::size_t n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  struct Sample {
    std::unique_ptr<Tape> tape;
    SampleOutputs out;
  };
  std::vector<Sample> samples(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    samples[i].tape = std::make_unique<Tape>(&model.params, with_gradients);
    ForwardOptions o;
    o.joint = cfg.joint;
    o.mask = cfg.lpmm ? &plan.masks[i] : nullptr;
    samples[i].out = forward_sample(*samples[i].tape, model, *batch[i], o);
    if (cfg.lpmm && cfg.global_on() && cfg.global_unmasked) {
      o.mask = nullptr;
      samples[i].out.globals = forward_sample(*samples[i].tape, model, *batch[i], o).globals;
    }
  });

  if (cfg.lpmm) {
    for (const auto& s : samples) {
      r.losses.loss_a += s.out.local->audio.scalar() * inv_n;
      r.losses.loss_v += s.out.local->video.scalar() * inv_n;
      r.losses.loss_t += s.out.local->text.scalar() * inv_n;
    }
  }

  Matrix gv, gt, ga;
  if (cfg.global_on()) {
    std::vector<Matrix> v, t, a;
    for (const auto& s : samples) {
      v.push_back(s.out.globals.video.value());
      t.push_back(s.out.globals.text.value());
      a.push_back(s.out.globals.audio.value());
    }
    Tape g(&model.params, with_gradients);
    Var V = g.leaf(stack_rows(v)), T = g.leaf(stack_rows(t)), A = g.leaf(stack_rows(a));
    const GlobalLossConfig gc{cfg.temperature, cfg.matching};
    Var loss = cfg.gam ? global_loss(g, V, T, A, plan.matching, gc) : vtm_baseline_loss(g, V, T, plan.matching, gc);
    r.losses.global = loss.scalar();
    if (with_gradients) {
      g.backward(loss, cfg.lambda);
      gv = g.grad(V);
      gt = g.grad(T);
      ga = g.grad(A);
      r.grads = g.take_param_grads();
    }
  }
  r.losses.total = total_loss(r.losses.loss_a + r.losses.loss_v + r.losses.loss_t, r.losses.global, cfg.lambda);
  if (!with_gradients) return r;

  r.grads.resize(model.params.size());
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    std::vector<std::pair<Var, Matrix>> seeds;
    const SampleOutputs& o = samples[i].out;
    if (cfg.lpmm) seeds.emplace_back(o.local->total, Matrix::Constant(1, 1, inv_n));
    if (cfg.global_on()) {
      const auto row = static_cast<Eigen::Index>(i);
      seeds.emplace_back(o.globals.video, gv.row(row));
      seeds.emplace_back(o.globals.text, gt.row(row));
      seeds.emplace_back(o.globals.audio, ga.row(row));
    }
    if (!seeds.empty()) samples[i].tape->backward(seeds);
  });
  for (auto& s : samples) accumulate(r.grads, s.tape->take_param_grads());
  return r;
}

void check_finite(const LossBreakdown& l, std::int64_t step) {
  const std::pair<const char*, double> parts[] = {
      {"loss_a", l.loss_a}, {"loss_v", l.loss_v}, {"loss_t", l.loss_t}, {"L_global", l.global}, {"total", l.total}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value))
      throw NumericError("non-finite " + std::string(name) + " (" + std::to_string(value) + ") at step " +
                         std::to_string(step));
  }
}

LossBreakdown train_step(Model& model, AdamState& adam, const std::vector<std::vector<const Triplet*>>& micro_batches,
                         std::int64_t step, const TrainConfig& cfg) {
  if (micro_batches.empty()) throw ValidationError("train_step: no micro-batches");
  const double w = 1.0 / static_cast<double>(micro_batches.size());
  Gradients grads(model.params.size());
  LossBreakdown mean;
  for (std::size_t a = 0; a < micro_batches.size(); ++a) {
    const std::int64_t micro = step * static_cast<std::int64_t>(micro_batches.size()) + static_cast<std::int64_t>(a);
    const StepPlan plan = draw_step_plan(model.config, cfg, micro_batches[a], micro);
    BatchResult r = batch_loss(model, micro_batches[a], plan, cfg, true);
    check_finite(r.losses, step);
    if (micro_batches.size() > 1)
      for (auto& g : r.grads) g *= w;
    accumulate(grads, r.grads);
    mean.loss_a += w * r.losses.loss_a;
    mean.loss_v += w * r.losses.loss_v;
    mean.loss_t += w * r.losses.loss_t;
    mean.global += w * r.losses.global;
    mean.total += w * r.losses.total;
  }
  adamw_update(model.params, grads, adam, cfg, learning_rate(cfg, step));
  return mean;
}

std::vector<std::size_t> batch_indices(std::size_t dataset_size, int batch, std::uint64_t seed,
                                       std::int64_t micro_step) {
  if (dataset_size == 0) throw ValidationError("batch_indices: empty dataset");
  const std::size_t b = std::min(dataset_size, static_cast<std::size_t>(batch));
  const std::size_t per_epoch = dataset_size / b;
  const auto epoch = static_cast<std::uint64_t>(micro_step) / per_epoch;
  const std::size_t pos = static_cast<std::size_t>(static_cast<std::uint64_t>(micro_step) % per_epoch);
  std::vector<std::size_t> perm(dataset_size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CounterRng rng = CounterRng(seed).split(kOrderStream).split(epoch);
  rng.shuffle(std::span<std::size_t>(perm));
  return {perm.begin() + static_cast<std::ptrdiff_t>(pos * b), perm.begin() + static_cast<std::ptrdiff_t>((pos + 1) * b)};
}

json to_json(const StepRecord& r) {
  return json{{"step", r.step},
              {"loss_a", r.losses.loss_a},
              {"loss_v", r.losses.loss_v},
              {"loss_t", r.losses.loss_t},
              {"L_global", r.losses.global},
              {"total", r.losses.total},
              {"wall_s", r.wall_seconds}};
}

Checkpoint init_checkpoint(const ModelConfig& mc, const TrainConfig& tc) {
  tc.validate();
  Checkpoint ck;
  ck.model = init_model(mc, tc.seed);
  ck.train = tc;
  ck.rng = CounterRng(tc.seed);
  ck.adam = AdamState::zeros(ck.model.params);
  return ck;
}

Checkpoint pretrain(const Dataset& data, const ModelConfig& mc, const TrainConfig& tc,
                    const std::function<void(const StepRecord&)>& log) {
  tc.validate();
  if (data.samples.empty()) throw ValidationError("training dataset is empty");
  if (!(data.config == mc.data))
    throw ValidationError("dataset configuration does not match the model's data configuration");
  Checkpoint ck = init_checkpoint(mc, tc);
  const auto start = std::chrono::steady_clock::now();
  for (std::int64_t step = 0; step < tc.steps; ++step) {
    std::vector<std::vector<const Triplet*>> micro(static_cast<std::size_t>(tc.accum_steps));
    for (int a = 0; a < tc.accum_steps; ++a) {
      for (std::size_t i : batch_indices(data.samples.size(), tc.batch, tc.seed, step * tc.accum_steps + a))
        micro[static_cast<std::size_t>(a)].push_back(&data.samples[i]);
    }
    const LossBreakdown losses = train_step(ck.model, ck.adam, micro, step, tc);
    ck.step = step + 1;
    ck.rng = CounterRng(ck.rng.key(), static_cast<std::uint64_t>(ck.step * tc.accum_steps));
    if (log && (ck.step % tc.log_interval == 0 || ck.step == tc.steps)) {
      const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
      log(StepRecord{ck.step, losses, wall.count()});
    }
  }
  return ck;
}

GradcheckResult gradcheck(const ModelConfig& mc, const TrainConfig& tc, std::uint64_t seed,
                          const GradcheckOptions& opts) {
  mc.validate();
  tc.validate();
  if (opts.batch < 1) throw ValidationError("gradcheck: batch must be positive");
  const Dataset data = generate_synthetic(opts.batch, 2, seed, SyntheticMode::correlated, mc.data);
  std::vector<const Triplet*> batch;
  for (const auto& t : data.samples) batch.push_back(&t);
  Model model = init_model(mc, seed);
  TrainConfig cfg = tc;
  cfg.threads = 1;
  const StepPlan plan = draw_step_plan(mc, cfg, batch, 0);
  const Gradients analytic = batch_loss(model, batch, plan, cfg, true).grads;

  GradcheckResult res;
  const CounterRng pick(seed);
  for (std::size_t id = 0; id < model.params.size(); ++id) {
    Matrix& value = model.params[id].value;
    const auto size = static_cast<std::size_t>(value.size());
    std::vector<std::size_t> entries(size);
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (opts.max_entries > 0 && size > static_cast<std::size_t>(opts.max_entries)) {
      CounterRng r = pick.split(fnv1a64(model.params[id].name));
      r.shuffle(std::span<std::size_t>(entries));
      entries.resize(static_cast<std::size_t>(opts.max_entries));
    }
    for (std::size_t k : entries) {
      double& x = value.data()[k];
      const double saved = x;
      x = saved + opts.h;
      const double up = batch_loss(model, batch, plan, cfg, false).losses.total;
      x = saved - opts.h;
      const double down = batch_loss(model, batch, plan, cfg, false).losses.total;
      x = saved;
      const double numeric = (up - down) / (2.0 * opts.h);
      const double a = analytic[id].size() ? analytic[id].data()[k] : 0.0;
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), opts.floor});
      ++res.checked;
      if (res.worst_param.empty() || rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = model.params[id].name;
        res.worst_index = static_cast<Eigen::Index>(k);
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

AblationVariant parse_ablation_variant(std::string_view s) {
  AblationVariant v;
  v.name = std::string(s);
  if (s == "neither") {
    v.lpmm = v.gam = false;
  } else if (s == "lpmm") {
    v.gam = false;
  } else if (s == "gam") {
    v.lpmm = false;
  } else if (s == "full") {
  } else if (s == "vtm") {
    v.lpmm = v.gam = false;
    v.vtm = true;
  } else if (s == "lpmm+vtm") {
    v.gam = false;
    v.vtm = true;
  } else if (s.starts_with("joint=")) {
    v.joint = ModalitySet::parse(s.substr(6));
  } else if (s.starts_with("shared=")) {
    v.shared_decoder = ModalitySet::parse(s.substr(7));
  } else {
    throw ValidationError("unknown ablation variant '" + std::string(s) +
                          "'; valid: neither, lpmm, gam, full, vtm, lpmm+vtm, joint=<vta subset>, shared=<vta subset>");
  }
  return v;
}

std::vector<AblationRow> run_ablation(const Dataset& train, const Dataset& test, const ModelConfig& mc,
                                      const TrainConfig& tc, const std::vector<AblationVariant>& variants,
                                      const EvalOptions& eval) {
  if (variants.empty()) throw ValidationError("run_ablation: no variants given");
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    TrainConfig t = tc;
    t.lpmm = v.lpmm;
    t.gam = v.gam;
    t.vtm = v.vtm;
    t.joint = v.joint;
    ModelConfig m = mc;
    m.decoder.shared = v.shared_decoder;
    AblationRow row;
    row.variant = v;
    const Checkpoint ck = pretrain(train, m, t, [&](const StepRecord& r) { row.final_losses = r.losses; });
    EvalOptions e = eval;
    e.joint = v.joint;
    row.t2v = evaluate(ck.model, test, Direction::t2v, {}, e);
    row.t2a = evaluate(ck.model, test, Direction::t2a, {}, e);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s | %6s %6s %6s | %6s %6s %6s %6s\n", "variant", "tv@1", "tv@5", "tv@10", "ta@1",
                "ta@5", "ta@10", "ta@50");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-14s | %6.1f %6.1f %6.1f | %6.1f %6.1f %6.1f %6.1f\n", r.variant.name.c_str(),
                  r.t2v.recall(1), r.t2v.recall(5), r.t2v.recall(10), r.t2a.recall(1), r.t2a.recall(5),
                  r.t2a.recall(10), r.t2a.recall(50));
    out << buf;
  }
  return out.str();
}

}  // namespace vlsa
