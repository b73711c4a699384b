#include "opendg/augment.hpp"

#include <string>

#include "opendg/errors.hpp"

namespace opendg {

MixupSample MixupBatch::sample(std::size_t i) const {
  MixupSample s;
  s.feature.assign(features.row_ptr(i), features.row_ptr(i) + features.cols);
  s.soft_label.assign(labels.row_ptr(i), labels.row_ptr(i) + labels.cols);
  return s;
}

MixupWeights sample_dirichlet(const DirichletParams& alpha, Rng& rng) {
  if (alpha.alpha.empty()) {
    throw ConfigError("sample_dirichlet: empty alpha");
  }
  for (double a : alpha.alpha) {
    if (!(a > 0.0)) {
      throw ConfigError("sample_dirichlet: alpha entries must be positive");
    }
  }
  MixupWeights w;
  w.lambda.resize(alpha.alpha.size());
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.alpha.size(); ++i) {
    w.lambda[i] = rng.gamma(alpha.alpha[i]);
    total += w.lambda[i];
  }
  for (auto& v : w.lambda) v /= total;
  return w;
}

DirichletParams build_alpha_train(std::size_t s, std::size_t n_domains,
                                  double alpha_max, double alpha_min) {
  if (s >= n_domains) {
    throw ConfigError("build_alpha_train: domain index " + std::to_string(s) +
                      " out of range for S=" + std::to_string(n_domains));
  }
  if (!(alpha_max > 0.0) || !(alpha_min > 0.0)) {
    throw ConfigError("build_alpha_train: alpha values must be positive");
  }
  DirichletParams p;
  p.alpha.assign(n_domains, alpha_min);
  p.alpha[s] = alpha_max;
  return p;
}

DirichletParams build_alpha_objective(std::size_t s, std::size_t n_domains,
                                      double alpha_max, double alpha_min) {
  if (s >= n_domains) {
    throw ConfigError("build_alpha_objective: domain index " + std::to_string(s) +
                      " out of range for S=" + std::to_string(n_domains));
  }
  if (!(alpha_max > 0.0) || !(alpha_min > 0.0)) {
    throw ConfigError("build_alpha_objective: alpha values must be positive");
  }
  DirichletParams p;
  p.alpha.assign(n_domains, alpha_max);
  p.alpha[s] = alpha_min;
  return p;
}

namespace {

void check_mix_inputs(const std::vector<const Matrix*>& features_per_domain,
                      const std::vector<const Matrix*>& labels_per_domain) {
  if (features_per_domain.empty() ||
      features_per_domain.size() != labels_per_domain.size()) {
    throw ShapeError("mixup: need one feature and one label matrix per domain");
  }
  const std::size_t fdim = features_per_domain[0]->cols;
  const std::size_t cdim = labels_per_domain[0]->cols;
  for (std::size_t d = 0; d < features_per_domain.size(); ++d) {
    const Matrix& f = *features_per_domain[d];
    const Matrix& l = *labels_per_domain[d];
    if (f.rows == 0) {
      throw DataError("mixup: domain " + std::to_string(d) + " batch is empty");
    }
    if (f.rows != l.rows || f.cols != fdim || l.cols != cdim) {
      throw ShapeError("mixup: width mismatch in domain " + std::to_string(d));
    }
  }
}

}  // namespace

MixupSample mix_rows(const std::vector<const Matrix*>& features_per_domain,
                     const std::vector<const Matrix*>& labels_per_domain,
                     const MixupWeights& weights, const std::vector<std::size_t>& rows) {
  check_mix_inputs(features_per_domain, labels_per_domain);
  const std::size_t n_domains = features_per_domain.size();
  if (weights.lambda.size() != n_domains || rows.size() != n_domains) {
    throw ShapeError("mix_rows: need one weight and one row per domain");
  }
  MixupSample out;
  out.feature.assign(features_per_domain[0]->cols, 0.0);
  out.soft_label.assign(labels_per_domain[0]->cols, 0.0);
  for (std::size_t d = 0; d < n_domains; ++d) {
    const double* frow = features_per_domain[d]->row_ptr(rows[d]);
    const double* lrow = labels_per_domain[d]->row_ptr(rows[d]);
    for (std::size_t j = 0; j < out.feature.size(); ++j) {
      out.feature[j] += weights.lambda[d] * frow[j];
    }
    for (std::size_t j = 0; j < out.soft_label.size(); ++j) {
      out.soft_label[j] += weights.lambda[d] * lrow[j];
    }
  }
  return out;
}

MixupBatch dir_mixup(const std::vector<const Matrix*>& features_per_domain,
                     const std::vector<const Matrix*>& labels_per_domain,
                     const DirichletParams& alpha, std::size_t n_samples, Rng& rng) {
  check_mix_inputs(features_per_domain, labels_per_domain);
  const std::size_t n_domains = features_per_domain.size();
  if (alpha.alpha.size() != n_domains) {
    throw ShapeError("dir_mixup: alpha length != number of domains");
  }
  MixupBatch batch;
  batch.features = Matrix(n_samples, features_per_domain[0]->cols);
  batch.labels = Matrix(n_samples, labels_per_domain[0]->cols);
  batch.sources.resize(n_samples);
  std::vector<std::size_t> rows(n_domains);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const MixupWeights w = sample_dirichlet(alpha, rng);
    for (std::size_t d = 0; d < n_domains; ++d) {
      rows[d] = rng.index(features_per_domain[d]->rows);
    }
    const MixupSample mixed =
        mix_rows(features_per_domain, labels_per_domain, w, rows);
    std::copy(mixed.feature.begin(), mixed.feature.end(), batch.features.row_ptr(i));
    std::copy(mixed.soft_label.begin(), mixed.soft_label.end(), batch.labels.row_ptr(i));
    auto& srcs = batch.sources[i];
    srcs.resize(n_domains);
    for (std::size_t d = 0; d < n_domains; ++d) {
      srcs[d] = MixSource{d, rows[d], w.lambda[d]};
    }
  }
  return batch;
}

MixupBatch classic_mixup(const std::vector<const Matrix*>& features_per_domain,
                         const std::vector<const Matrix*>& labels_per_domain,
                         double beta_alpha, std::size_t n_samples, Rng& rng) {
  check_mix_inputs(features_per_domain, labels_per_domain);
  if (!(beta_alpha > 0.0)) {
    throw ConfigError("classic_mixup: beta parameter must be positive");
  }
  const std::size_t fdim = features_per_domain[0]->cols;
  const std::size_t cdim = labels_per_domain[0]->cols;
  std::size_t total_rows = 0;
  for (const Matrix* f : features_per_domain) total_rows += f->rows;

  // Uniform over the pooled rows of all domain batches.
  auto pick = [&](std::size_t flat) {
    std::size_t d = 0;
    while (flat >= features_per_domain[d]->rows) {
      flat -= features_per_domain[d]->rows;
      ++d;
    }
    return std::pair<std::size_t, std::size_t>{d, flat};
  };

  MixupBatch batch;
  batch.features = Matrix(n_samples, fdim);
  batch.labels = Matrix(n_samples, cdim);
  batch.sources.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double g1 = rng.gamma(beta_alpha);
    const double g2 = rng.gamma(beta_alpha);
    const double lam = g1 / (g1 + g2);
    const auto [d1, r1] = pick(rng.index(total_rows));
    const auto [d2, r2] = pick(rng.index(total_rows));
    batch.sources[i] = {MixSource{d1, r1, lam}, MixSource{d2, r2, 1.0 - lam}};
    for (const MixSource& src : batch.sources[i]) {
      const double* frow = features_per_domain[src.domain]->row_ptr(src.row);
      const double* lrow = labels_per_domain[src.domain]->row_ptr(src.row);
      for (std::size_t j = 0; j < fdim; ++j) {
        batch.features.at(i, j) += src.weight * frow[j];
      }
      for (std::size_t j = 0; j < cdim; ++j) {
        batch.labels.at(i, j) += src.weight * lrow[j];
      }
    }
  }
  return batch;
}

Matrix distill_labels(const Matrix& x_s, const ModelBank& bank, std::size_t s,
                      Rng& rng) {
  const std::size_t n_domains = bank.size();
  if (n_domains < 2) {
    throw ConfigError("distill_labels: need at least two domains");
  }
  if (s >= n_domains) {
    throw ConfigError("distill_labels: domain index out of range");
  }
  // Teacher predictions, ordered by ascending domain index, skipping s.
  std::vector<Matrix> teacher_probs;
  teacher_probs.reserve(n_domains - 1);
  for (std::size_t j = 0; j < n_domains; ++j) {
    if (j == s) continue;
    teacher_probs.push_back(predict(bank.models[j], x_s));
  }
  const std::size_t n_classes = teacher_probs[0].cols;
  DirichletParams ones;
  ones.alpha.assign(n_domains - 1, 1.0);
  Matrix out(x_s.rows, n_classes);
  for (std::size_t i = 0; i < x_s.rows; ++i) {
    const MixupWeights w = sample_dirichlet(ones, rng);
    for (std::size_t t = 0; t < teacher_probs.size(); ++t) {
      const double* trow = teacher_probs[t].row_ptr(i);
      for (std::size_t k = 0; k < n_classes; ++k) {
        out.at(i, k) += w.lambda[t] * trow[k];
      }
    }
  }
  return out;
}

}  // namespace opendg
