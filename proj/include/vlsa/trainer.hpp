#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlsa/autodiff.hpp"
#include "vlsa/global_matching.hpp"
#include "vlsa/mask_plan.hpp"
#include "vlsa/model.hpp"
#include "vlsa/retrieval_eval.hpp"
#include "vlsa/triplet_data.hpp"

namespace vlsa {

struct TrainConfig {
  int steps = 2000;
  double lr = 1e-4;
  double weight_decay = 0.01;
  int batch = 8;
  // Micro-batches of `batch` samples averaged into one update.
  int accum_steps = 1;
  double lambda = 5.0;
  double temperature = 0.05;
  std::uint64_t seed = 0;
  bool lpmm = true;
  bool gam = true;
  // Video-text baseline objective; excludes gam.
  bool vtm = false;
  // BCE matching terms inside the global objective.
  bool matching = true;
  // Pool the global embeddings from a second, mask-free encoder pass instead
  // of the masked pass that feeds the decoder.
  bool global_unmasked = true;
  // Modalities that attend to each other in the encoder.
  ModalitySet joint = ModalitySet::all();
  // Linear warmup length in steps; 0 keeps the learning rate constant.
  int warmup_steps = 0;
  int log_interval = 100;
  int threads = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static TrainConfig desk();
  static TrainConfig paper();

  bool global_on() const { return gam || vtm; }
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& c);
// `train` section keys. Unknown keys are rejected with the key named.
TrainConfig train_config_from_json(const nlohmann::json& train, const TrainConfig& base);

/// Adam moments for every parameter plus the update counter.
struct AdamState {
  Gradients m;
  Gradients v;
  std::int64_t step = 0;

  static AdamState zeros(const ParamStore& params);
  bool operator==(const AdamState&) const = default;
};

/// Decoupled weight decay on tensors flagged for decay, then the bias-corrected
/// adaptive-moment step. Empty gradient entries count as zero.
void adamw_update(ParamStore& params, const Gradients& grads, AdamState& state, const TrainConfig& cfg, double lr);

// Learning rate at a 0-based step under the warmup setting.
double learning_rate(const TrainConfig& cfg, std::int64_t step);

struct LossBreakdown {
  double loss_a = 0.0;
  double loss_v = 0.0;
  double loss_t = 0.0;
  double global = 0.0;
  double total = 0.0;
};

/// Random choices for one micro-batch: a mask plan per sample and the
/// matching negatives.
struct StepPlan {
  std::vector<MaskPlan> masks;
  MatchingPlan matching;
};

StepPlan draw_step_plan(const ModelConfig& mc, const TrainConfig& tc, const std::vector<const Triplet*>& batch,
                        std::int64_t micro_step);

struct BatchResult {
  LossBreakdown losses;
  Gradients grads;  // empty unless requested
};

/// Loss (and optionally gradients) of one micro-batch. The local loss is the
/// batch mean of per-sample losses; the global loss is computed over the batch
/// of pooled embeddings.
BatchResult batch_loss(const Model& model, const std::vector<const Triplet*>& batch, const StepPlan& plan,
                       const TrainConfig& cfg, bool with_gradients);

// Throws NumericError naming the first non-finite component.
void check_finite(const LossBreakdown& l, std::int64_t step);

/// One optimizer update over accum_steps micro-batches.
LossBreakdown train_step(Model& model, AdamState& adam, const std::vector<std::vector<const Triplet*>>& micro_batches,
                         std::int64_t step, const TrainConfig& cfg);

// Dataset indices of micro-batch `micro_step`: epochs are fresh permutations,
// consumed in consecutive slices of the batch size.
std::vector<std::size_t> batch_indices(std::size_t dataset_size, int batch, std::uint64_t seed,
                                       std::int64_t micro_step);

struct Checkpoint {
  Model model;
  TrainConfig train;
  std::int64_t step = 0;
  CounterRng rng;
  AdamState adam;
};

struct StepRecord {
  std::int64_t step = 0;  // updates completed
  LossBreakdown losses;
  double wall_seconds = 0.0;
};

nlohmann::json to_json(const StepRecord& r);

Checkpoint init_checkpoint(const ModelConfig& mc, const TrainConfig& tc);

/// Fixed-step loop. `log` receives a record every log_interval updates and
/// after the last one.
Checkpoint pretrain(const Dataset& data, const ModelConfig& mc, const TrainConfig& tc,
                    const std::function<void(const StepRecord&)>& log = {});

struct GradcheckOptions {
  double h = 1e-5;
  // Entries compared per tensor; larger tensors are sampled. 0 checks all.
  int max_entries = 0;
  int batch = 3;
  // Denominator floor of the relative error.
  double floor = 1e-4;
};

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Analytic gradient of the total loss against central differences on a
/// synthetic correlated batch.
GradcheckResult gradcheck(const ModelConfig& mc, const TrainConfig& tc, std::uint64_t seed,
                          const GradcheckOptions& opts = {});

struct AblationVariant {
  std::string name;
  bool lpmm = true;
  bool gam = true;
  bool vtm = false;
  ModalitySet joint = ModalitySet::all();
  ModalitySet shared_decoder = ModalitySet::all();
};

/// neither | lpmm | gam | full | vtm | lpmm+vtm | joint=<set> | shared=<set>.
AblationVariant parse_ablation_variant(std::string_view s);

struct AblationRow {
  AblationVariant variant;
  RetrievalReport t2v;
  RetrievalReport t2a;
  LossBreakdown final_losses;
};

/// Trains one model per variant from the same seed and budget, then evaluates
/// text-to-video and text-to-audio retrieval on `test`.
std::vector<AblationRow> run_ablation(const Dataset& train, const Dataset& test, const ModelConfig& mc,
                                      const TrainConfig& tc, const std::vector<AblationVariant>& variants,
                                      const EvalOptions& eval = {});

std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace vlsa
