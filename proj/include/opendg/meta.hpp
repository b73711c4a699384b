#pragma once

#include <cstdint>
#include <vector>

#include "opendg/augment.hpp"
#include "opendg/data.hpp"
#include "opendg/model.hpp"

namespace opendg {

// Hyperparameters of the meta-training loop. Defaults: inner step 0.01,
// outer rate 0.001 decayed by 10x after epoch 24 of 30, Dirichlet
// parameters 0.6 / 0.2.
struct TrainConfig {
  double eta = 0.01;         // inner (meta-training) step size
  double beta = 0.001;       // outer learning rate
  double alpha_max = 0.6;
  double alpha_min = 0.2;
  int epochs = 30;
  int decay_epoch = 24;      // epochs >= decay_epoch use beta / decay_factor
  double decay_factor = 10.0;
  int batch_size = 32;       // per domain
  double momentum = 0.0;     // 0 = plain SGD
  std::uint64_t seed = 0;

  // Loss-term toggles (ablation axes).
  bool use_dmix_train = true;
  bool use_dmix_obj = true;
  bool use_distill = true;
  bool use_meta = true;          // false: joint SGD on the meta-training loss
  bool use_classic_mixup = false;  // two-sample mixup instead of Dir-mixup
  double classic_mixup_alpha = 0.2;

  // Algorithm variants kept for comparison, both off by default:
  // sequential_update applies each domain's outer update inside the loop
  // (order-dependent); foreign_extractor feeds mixup with each domain's own
  // frozen extractor instead of the network under training.
  bool sequential_update = false;
  bool foreign_extractor = false;

  void validate() const;
};

struct TrainLossResult {
  double loss = 0.0;
  ModelGradients grads;
  MixupBatch mixup;   // empty when the mixup term is disabled
  Matrix distilled;   // empty when distillation is disabled
};

struct ObjectiveLossResult {
  double loss = 0.0;
  ModelGradients grads;  // w.r.t. the updated parameters theta'
  MixupBatch mixup;
};

struct MetaStepReport {
  int epoch = 0;
  int step = 0;
  std::vector<double> loss_tr;    // per domain
  std::vector<double> loss_obj;   // per domain (0 when use_meta is off)
  std::vector<double> grad_norm;  // norm of the applied update direction
};

struct TrainLogEntry {
  int epoch = 0;
  int step = 0;
  int domain = 0;
  double l_tr = 0.0;
  double l_obj = 0.0;
  double grad_norm = 0.0;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;

  // Mean meta-training loss over all steps and domains of one epoch.
  double epoch_mean_loss_tr(int epoch) const;
};

// Meta-training loss for domain s (classification on raw data, Dir-mixup
// data, and distilled soft labels) with analytic gradients for (F_s, G_s).
// Teachers are frozen. Augmentation draws come from `rng` in a fixed order
// (distilled labels first, then mixup), so reseeding replays them exactly.
TrainLossResult meta_train_loss(std::size_t s, const ModelBank& bank,
                                const std::vector<FeatureBatch>& batch_tr,
                                const TrainConfig& cfg, Rng& rng);

// theta' = theta - eta * grads on a copy; the original model is untouched.
DomainModel inner_update(const DomainModel& model, const ModelGradients& grads,
                         double eta);

// Meta-objective for domain s: classification loss of the updated network
// on the other domains' raw data plus Dir-mixup with the objective alpha.
ObjectiveLossResult meta_objective_loss(std::size_t s, const DomainModel& theta_prime,
                                        const ModelBank& bank,
                                        const std::vector<FeatureBatch>& batch_obj,
                                        const TrainConfig& cfg, Rng& rng);

// One iteration of the training loop over all domains, first-order rule:
// theta <- theta - beta * (grad L_tr(theta) + grad L_obj(theta')). Reads
// the pre-step bank for every domain before any write (unless
// cfg.sequential_update). cfg.beta must already carry any decay. Each
// domain's augmentation stream is derived from step_seed, so results do
// not depend on domain processing order. `velocity` may be null when
// momentum is 0.
MetaStepReport meta_step(ModelBank& bank, const std::vector<FeatureBatch>& batch_tr,
                         const std::vector<FeatureBatch>& batch_obj,
                         const TrainConfig& cfg, std::uint64_t step_seed,
                         std::vector<ModelGradients>* velocity = nullptr);

// Full training run: epochs * ceil(min domain size / batch_size) meta
// steps, outer rate divided by decay_factor from decay_epoch on. Fixed
// seed gives bit-identical final parameters.
TrainResult train(ModelBank& bank, const std::vector<Dataset>& sources,
                  const TrainConfig& cfg);

}  // namespace opendg
