#pragma once

#include <cstddef>
#include <vector>

#include "opendg/matrix.hpp"
#include "opendg/model.hpp"
#include "opendg/rng.hpp"

namespace opendg {

struct DirichletParams {
  std::vector<double> alpha;  // all entries strictly positive
};

struct MixupWeights {
  std::vector<double> lambda;  // simplex: nonnegative, sums to 1
};

struct MixupSample {
  std::vector<double> feature;
  std::vector<double> soft_label;
};

// One (domain, row, weight) contribution to a mixed sample. Dir-mixup has
// exactly one contribution per domain; classic two-sample mixup has two.
struct MixSource {
  std::size_t domain = 0;
  std::size_t row = 0;
  double weight = 0.0;
};

// A batch of mixed samples plus the bookkeeping needed to backpropagate
// classifier-input gradients to the contributing feature rows.
struct MixupBatch {
  Matrix features;  // n x feature_dim
  Matrix labels;    // n x num_classes
  std::vector<std::vector<MixSource>> sources;  // per mixed sample

  std::size_t size() const { return features.rows; }
  MixupSample sample(std::size_t i) const;
};

// lambda ~ Dirichlet(alpha) via normalized Gamma(alpha_i, 1) variates.
// Throws ConfigError on a nonpositive alpha entry.
MixupWeights sample_dirichlet(const DirichletParams& alpha, Rng& rng);

// Deterministic core of Dir-mixup: the weighted sum of one chosen row per
// domain. weights and rows must both have one entry per domain.
MixupSample mix_rows(const std::vector<const Matrix*>& features_per_domain,
                     const std::vector<const Matrix*>& labels_per_domain,
                     const MixupWeights& weights, const std::vector<std::size_t>& rows);

// Length-S vector, entry s = alpha_max, all others alpha_min: the
// meta-training parameter biased toward the domain under update.
DirichletParams build_alpha_train(std::size_t s, std::size_t n_domains,
                                  double alpha_max, double alpha_min);

// Mirror image: entry s = alpha_min, all others alpha_max, biasing the
// meta-objective mixup away from the domain under update.
DirichletParams build_alpha_objective(std::size_t s, std::size_t n_domains,
                                      double alpha_max, double alpha_min);

// Draws n_samples mixed samples. Per sample: one fresh lambda, then one
// uniformly chosen row from every domain's batch (in domain order); the
// output is the lambda-weighted sum of the chosen features and labels.
MixupBatch dir_mixup(const std::vector<const Matrix*>& features_per_domain,
                     const std::vector<const Matrix*>& labels_per_domain,
                     const DirichletParams& alpha, std::size_t n_samples, Rng& rng);

// Classic two-sample mixup over the pooled rows of all domains, kept as an
// ablation path. lambda ~ Beta(a, a) via two Gamma draws.
MixupBatch classic_mixup(const std::vector<const Matrix*>& features_per_domain,
                         const std::vector<const Matrix*>& labels_per_domain,
                         double beta_alpha, std::size_t n_samples, Rng& rng);

// Distilled soft labels for domain s's inputs: per row, lambda ~
// Dirichlet(1,...,1) of length S-1 over the other domains' networks, and
// the label is the lambda-weighted sum of their predictive distributions.
// Teachers are read-only; no gradient flows through them.
Matrix distill_labels(const Matrix& x_s, const ModelBank& bank, std::size_t s,
                      Rng& rng);

}  // namespace opendg
