#include "opendg/meta.hpp"

#include <cmath>
#include <string>

#include "opendg/errors.hpp"

namespace opendg {

void TrainConfig::validate() const {
  if (!(eta > 0.0)) throw ConfigError("TrainConfig: eta must be positive");
  if (!(beta > 0.0)) throw ConfigError("TrainConfig: beta must be positive");
  if (!(alpha_min > 0.0) || !(alpha_max >= alpha_min)) {
    throw ConfigError("TrainConfig: need alpha_max >= alpha_min > 0");
  }
  if (epochs < 0) throw ConfigError("TrainConfig: epochs must be nonnegative");
  if (decay_epoch > epochs) {
    throw ConfigError("TrainConfig: decay_epoch must not exceed epochs");
  }
  if (!(decay_factor > 0.0)) {
    throw ConfigError("TrainConfig: decay_factor must be positive");
  }
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("TrainConfig: momentum must lie in [0, 1)");
  }
  if (use_dmix_train && use_classic_mixup) {
    throw ConfigError("TrainConfig: use_dmix_train and use_classic_mixup are exclusive");
  }
  if (!(classic_mixup_alpha > 0.0)) {
    throw ConfigError("TrainConfig: classic_mixup_alpha must be positive");
  }
}

double TrainResult::epoch_mean_loss_tr(int epoch) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : log) {
    if (e.epoch == epoch) {
      sum += e.l_tr;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

namespace {

void check_batches(const ModelBank& bank, const std::vector<FeatureBatch>& batches,
                   const char* who) {
  if (batches.size() != bank.size()) {
    throw ShapeError(std::string(who) + ": expected one batch per domain");
  }
  for (const auto& b : batches) {
    if (b.size() == 0) throw DataError(std::string(who) + ": empty domain batch");
    if (b.features.cols != bank.input_dim || b.labels.cols != bank.num_classes) {
      throw ShapeError(std::string(who) + ": batch width mismatch");
    }
  }
}

// Routes dL/d(mixed feature) rows back to the contributing per-domain
// feature rows, weighted by the mixing coefficients.
void scatter_mixup_grad(const MixupBatch& mix, const Matrix& dmix,
                        std::vector<Matrix>& dz_per_domain, bool own_domain_only,
                        std::size_t s) {
  for (std::size_t i = 0; i < mix.size(); ++i) {
    for (const MixSource& src : mix.sources[i]) {
      if (own_domain_only && src.domain != s) continue;
      double* drow = dz_per_domain[src.domain].row_ptr(src.row);
      const double* grow = dmix.row_ptr(i);
      for (std::size_t j = 0; j < dmix.cols; ++j) {
        drow[j] += src.weight * grow[j];
      }
    }
  }
}

void ensure_finite(const Matrix& m, const char* what, std::size_t domain) {
  if (!all_finite(m)) {
    throw NumericError(std::string(what) + ": non-finite values for domain " +
                       std::to_string(domain));
  }
}

bool is_zero(const Matrix& m) {
  for (double v : m.data) {
    if (v != 0.0) return false;
  }
  return true;
}

}  // namespace

TrainLossResult meta_train_loss(std::size_t s, const ModelBank& bank,
                                const std::vector<FeatureBatch>& batch_tr,
                                const TrainConfig& cfg, Rng& rng) {
  check_batches(bank, batch_tr, "meta_train_loss");
  if (s >= bank.size()) throw ConfigError("meta_train_loss: domain index out of range");
  if (cfg.use_distill && bank.size() < 2) {
    throw ConfigError("meta_train_loss: distillation needs at least two domains");
  }
  const DomainModel& model = bank.models[s];
  const std::size_t n_domains = bank.size();
  const bool mixup_on = cfg.use_dmix_train || cfg.use_classic_mixup;

  TrainLossResult result;
  result.grads = zero_model_gradients(model);

  // Own-domain forward, shared by the raw and distilled terms.
  ForwardCache cache_own;
  const Matrix z_own = mlp_forward(model.extractor, batch_tr[s].features, &cache_own);
  ForwardCache cache_cls_raw;
  const Matrix probs =
      softmax_rows(mlp_forward(model.classifier, z_own, &cache_cls_raw));
  ensure_finite(z_own, "meta_train_loss", s);
  ensure_finite(probs, "meta_train_loss", s);

  result.loss = soft_cross_entropy(probs, batch_tr[s].labels);
  Matrix dlogits_raw = soft_cross_entropy_logit_grad(probs, batch_tr[s].labels);

  if (cfg.use_distill) {
    result.distilled = distill_labels(batch_tr[s].features, bank, s, rng);
    result.loss += soft_cross_entropy(probs, result.distilled);
    add_scaled(dlogits_raw, soft_cross_entropy_logit_grad(probs, result.distilled));
  }

  // Feature-space gradient accumulators per domain batch.
  std::vector<Matrix> dz(n_domains);
  dz[s] = Matrix(batch_tr[s].size(), bank.feature_dim);
  std::vector<ForwardCache> cache_foreign(n_domains);

  if (mixup_on) {
    std::vector<Matrix> feats(n_domains);
    std::vector<const Matrix*> feat_ptrs(n_domains);
    std::vector<const Matrix*> label_ptrs(n_domains);
    for (std::size_t j = 0; j < n_domains; ++j) {
      if (j == s) {
        feat_ptrs[j] = &z_own;
      } else if (cfg.foreign_extractor) {
        feats[j] = extract(bank.models[j], batch_tr[j].features);
        feat_ptrs[j] = &feats[j];
      } else {
        feats[j] =
            mlp_forward(model.extractor, batch_tr[j].features, &cache_foreign[j]);
        feat_ptrs[j] = &feats[j];
        dz[j] = Matrix(batch_tr[j].size(), bank.feature_dim);
      }
      label_ptrs[j] = &batch_tr[j].labels;
    }
    const std::size_t n_mix = batch_tr[s].size();
    if (cfg.use_classic_mixup) {
      result.mixup = classic_mixup(feat_ptrs, label_ptrs, cfg.classic_mixup_alpha,
                                   n_mix, rng);
    } else {
      const DirichletParams alpha =
          build_alpha_train(s, n_domains, cfg.alpha_max, cfg.alpha_min);
      result.mixup = dir_mixup(feat_ptrs, label_ptrs, alpha, n_mix, rng);
    }

    ForwardCache cache_cls_mix;
    const Matrix probs_mix = softmax_rows(
        mlp_forward(model.classifier, result.mixup.features, &cache_cls_mix));
    ensure_finite(probs_mix, "meta_train_loss (mixup)", s);
    result.loss += soft_cross_entropy(probs_mix, result.mixup.labels);
    const Matrix dlogits_mix =
        soft_cross_entropy_logit_grad(probs_mix, result.mixup.labels);
    Matrix dmix;
    result.grads.classifier.add_scaled(
        mlp_backward(model.classifier, cache_cls_mix, dlogits_mix, &dmix));
    scatter_mixup_grad(result.mixup, dmix, dz, cfg.foreign_extractor, s);
  }

  Matrix dz_own_raw;
  result.grads.classifier.add_scaled(
      mlp_backward(model.classifier, cache_cls_raw, dlogits_raw, &dz_own_raw));
  add_scaled(dz[s], dz_own_raw);

  for (std::size_t j = 0; j < n_domains; ++j) {
    if (dz[j].rows == 0) continue;
    const ForwardCache& cache = (j == s) ? cache_own : cache_foreign[j];
    if (j != s && is_zero(dz[j])) continue;
    result.grads.extractor.add_scaled(mlp_backward(model.extractor, cache, dz[j]));
  }
  return result;
}

DomainModel inner_update(const DomainModel& model, const ModelGradients& grads,
                         double eta) {
  DomainModel updated = model;
  sgd_step(updated, grads, eta);
  return updated;
}

ObjectiveLossResult meta_objective_loss(std::size_t s, const DomainModel& theta_prime,
                                        const ModelBank& bank,
                                        const std::vector<FeatureBatch>& batch_obj,
                                        const TrainConfig& cfg, Rng& rng) {
  check_batches(bank, batch_obj, "meta_objective_loss");
  if (s >= bank.size()) {
    throw ConfigError("meta_objective_loss: domain index out of range");
  }
  const std::size_t n_domains = bank.size();
  const bool mixup_on = cfg.use_dmix_obj;

  ObjectiveLossResult result;
  result.grads = zero_model_gradients(theta_prime);

  // Updated-extractor features for every domain; the raw term needs j != s,
  // the mixup term (default reading) all of them.
  std::vector<ForwardCache> caches(n_domains);
  std::vector<Matrix> feats(n_domains);
  std::vector<Matrix> dz(n_domains);
  for (std::size_t j = 0; j < n_domains; ++j) {
    feats[j] = mlp_forward(theta_prime.extractor, batch_obj[j].features, &caches[j]);
    ensure_finite(feats[j], "meta_objective_loss", j);
    dz[j] = Matrix(batch_obj[j].size(), bank.feature_dim);
  }

  for (std::size_t j = 0; j < n_domains; ++j) {
    if (j == s) continue;
    ForwardCache cache_cls;
    const Matrix probs =
        softmax_rows(mlp_forward(theta_prime.classifier, feats[j], &cache_cls));
    result.loss += soft_cross_entropy(probs, batch_obj[j].labels);
    const Matrix dlogits = soft_cross_entropy_logit_grad(probs, batch_obj[j].labels);
    Matrix dfeat;
    result.grads.classifier.add_scaled(
        mlp_backward(theta_prime.classifier, cache_cls, dlogits, &dfeat));
    add_scaled(dz[j], dfeat);
  }

  if (mixup_on) {
    std::vector<Matrix> frozen(n_domains);
    std::vector<const Matrix*> feat_ptrs(n_domains);
    std::vector<const Matrix*> label_ptrs(n_domains);
    for (std::size_t j = 0; j < n_domains; ++j) {
      if (cfg.foreign_extractor && j != s) {
        frozen[j] = extract(bank.models[j], batch_obj[j].features);
        feat_ptrs[j] = &frozen[j];
      } else {
        feat_ptrs[j] = &feats[j];
      }
      label_ptrs[j] = &batch_obj[j].labels;
    }
    const DirichletParams alpha =
        build_alpha_objective(s, n_domains, cfg.alpha_max, cfg.alpha_min);
    result.mixup =
        dir_mixup(feat_ptrs, label_ptrs, alpha, batch_obj[s].size(), rng);

    ForwardCache cache_cls_mix;
    const Matrix probs_mix = softmax_rows(
        mlp_forward(theta_prime.classifier, result.mixup.features, &cache_cls_mix));
    result.loss += soft_cross_entropy(probs_mix, result.mixup.labels);
    const Matrix dlogits_mix =
        soft_cross_entropy_logit_grad(probs_mix, result.mixup.labels);
    Matrix dmix;
    result.grads.classifier.add_scaled(
        mlp_backward(theta_prime.classifier, cache_cls_mix, dlogits_mix, &dmix));
    scatter_mixup_grad(result.mixup, dmix, dz, cfg.foreign_extractor, s);
  }

  for (std::size_t j = 0; j < n_domains; ++j) {
    if (is_zero(dz[j])) continue;
    result.grads.extractor.add_scaled(
        mlp_backward(theta_prime.extractor, caches[j], dz[j]));
  }
  return result;
}

namespace {

void apply_outer_update(DomainModel& model, const ModelGradients& update,
                        double beta, double momentum, ModelGradients* velocity) {
  if (momentum > 0.0 && velocity) {
    velocity->scale(momentum);
    velocity->add_scaled(update);
    sgd_step(model, *velocity, beta);
  } else {
    sgd_step(model, update, beta);
  }
}

}  // namespace

MetaStepReport meta_step(ModelBank& bank, const std::vector<FeatureBatch>& batch_tr,
                         const std::vector<FeatureBatch>& batch_obj,
                         const TrainConfig& cfg, std::uint64_t step_seed,
                         std::vector<ModelGradients>* velocity) {
  const std::size_t n_domains = bank.size();
  MetaStepReport report;
  report.loss_tr.assign(n_domains, 0.0);
  report.loss_obj.assign(n_domains, 0.0);
  report.grad_norm.assign(n_domains, 0.0);
  std::vector<ModelGradients> updates(n_domains);

  for (std::size_t s = 0; s < n_domains; ++s) {
    Rng rng_tr(derive_seed(step_seed, 1, s));
    TrainLossResult tr = meta_train_loss(s, bank, batch_tr, cfg, rng_tr);
    if (!std::isfinite(tr.loss)) {
      throw NumericError("meta_step: non-finite meta-training loss " +
                         std::to_string(tr.loss) + " for domain " + std::to_string(s));
    }
    report.loss_tr[s] = tr.loss;
    updates[s] = std::move(tr.grads);

    if (cfg.use_meta) {
      const DomainModel theta_prime =
          inner_update(bank.models[s], updates[s], cfg.eta);
      Rng rng_obj(derive_seed(step_seed, 2, s));
      ObjectiveLossResult obj =
          meta_objective_loss(s, theta_prime, bank, batch_obj, cfg, rng_obj);
      if (!std::isfinite(obj.loss)) {
        throw NumericError("meta_step: non-finite meta-objective loss for domain " +
                           std::to_string(s));
      }
      report.loss_obj[s] = obj.loss;
      updates[s].add_scaled(obj.grads);
    }
    report.grad_norm[s] = updates[s].norm();
    if (cfg.sequential_update) {
      apply_outer_update(bank.models[s], updates[s], cfg.beta, cfg.momentum,
                         velocity ? &(*velocity)[s] : nullptr);
    }
  }
  if (!cfg.sequential_update) {
    for (std::size_t s = 0; s < n_domains; ++s) {
      apply_outer_update(bank.models[s], updates[s], cfg.beta, cfg.momentum,
                         velocity ? &(*velocity)[s] : nullptr);
    }
  }
  return report;
}

TrainResult train(ModelBank& bank, const std::vector<Dataset>& sources,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (sources.size() != bank.size()) {
    throw ShapeError("train: dataset count does not match bank size");
  }
  for (const auto& d : sources) {
    if (d.size() == 0) throw DataError("train: empty source dataset");
  }
  BatchIterator iter(&sources, cfg.batch_size, derive_seed(cfg.seed, 0x69746572ULL));
  const std::size_t steps = iter.steps_per_epoch();

  std::vector<ModelGradients> velocity;
  if (cfg.momentum > 0.0) {
    velocity.reserve(bank.size());
    for (const auto& m : bank.models) velocity.push_back(zero_model_gradients(m));
  }

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    TrainConfig step_cfg = cfg;
    if (epoch >= cfg.decay_epoch) step_cfg.beta = cfg.beta / cfg.decay_factor;
    for (std::size_t step = 0; step < steps; ++step) {
      const std::vector<FeatureBatch> batch_tr = iter.next();
      const std::vector<FeatureBatch> batch_obj = iter.next();
      const std::uint64_t step_seed =
          derive_seed(cfg.seed, 0x73746570ULL, static_cast<std::uint64_t>(epoch), step);
      MetaStepReport rep =
          meta_step(bank, batch_tr, batch_obj, step_cfg, step_seed,
                    cfg.momentum > 0.0 ? &velocity : nullptr);
      for (std::size_t s = 0; s < bank.size(); ++s) {
        result.log.push_back(TrainLogEntry{epoch, static_cast<int>(step),
                                           static_cast<int>(s), rep.loss_tr[s],
                                           rep.loss_obj[s], rep.grad_norm[s]});
      }
    }
  }
  return result;
}

}  // namespace opendg
