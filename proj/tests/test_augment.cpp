#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "opendg/augment.hpp"
#include "opendg/errors.hpp"
#include "opendg/model.hpp"
#include "oracles.hpp"

using namespace opendg;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.normal();
  return m;
}

Matrix onehot_rows(const std::vector<int>& classes, std::size_t width) {
  Matrix m(classes.size(), width);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    m.at(i, static_cast<std::size_t>(classes[i])) = 1.0;
  }
  return m;
}

}  // namespace

TEST_CASE("sample_dirichlet degenerate and invalid alphas") {
  Rng rng(31);
  const MixupWeights w = sample_dirichlet(DirichletParams{{2.5}}, rng);
  REQUIRE(w.lambda.size() == 1);
  CHECK(w.lambda[0] == 1.0);

  CHECK_THROWS_AS(sample_dirichlet(DirichletParams{{0.5, 0.0}}, rng), ConfigError);
  CHECK_THROWS_AS(sample_dirichlet(DirichletParams{{-1.0, 1.0}}, rng), ConfigError);
  CHECK_THROWS_AS(sample_dirichlet(DirichletParams{{}}, rng), ConfigError);
}

TEST_CASE("sample_dirichlet always lands on the simplex") {
  Rng rng(32);
  for (const auto& alpha : {std::vector<double>{0.2, 0.2, 0.2},
                            std::vector<double>{0.6, 0.2, 0.2},
                            std::vector<double>{5, 1, 3, 0.4}}) {
    for (int i = 0; i < 2000; ++i) {
      const MixupWeights w = sample_dirichlet(DirichletParams{alpha}, rng);
      double sum = 0.0;
      for (double v : w.lambda) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("empirical Dirichlet moments match closed forms") {
  const std::size_t n = 100000;
  for (const auto& alpha :
       {std::vector<double>{1.0, 1.0, 1.0}, std::vector<double>{0.6, 0.2, 0.2}}) {
    Rng rng(33);
    std::vector<std::vector<double>> draws(alpha.size());
    for (std::size_t i = 0; i < n; ++i) {
      const MixupWeights w = sample_dirichlet(DirichletParams{alpha}, rng);
      for (std::size_t k = 0; k < alpha.size(); ++k) draws[k].push_back(w.lambda[k]);
    }
    double a0 = 0.0;
    for (double a : alpha) a0 += a;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
      const double mean_want = oracles::dirichlet_mean(alpha, k);
      const double var_want = oracles::dirichlet_var(alpha, k);
      double mean = 0.0;
      for (double v : draws[k]) mean += v;
      mean /= n;
      double var = 0.0;
      for (double v : draws[k]) var += (v - mean) * (v - mean);
      var /= (n - 1);
      const double se_mean = std::sqrt(var_want / n);
      CHECK(std::abs(mean - mean_want) <= 3 * se_mean);
      const double mu4 = oracles::beta_mu4(alpha[k], a0 - alpha[k]);
      const double se_var = std::sqrt((mu4 - var_want * var_want) / n);
      CHECK(std::abs(var - var_want) <= 4 * se_var);
    }
  }
}

TEST_CASE("Dirichlet(1,1) marginal is uniform on [0,1]") {
  Rng rng(34);
  const std::size_t n = 100000;
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean += sample_dirichlet(DirichletParams{{1.0, 1.0}}, rng).lambda[0];
  }
  mean /= n;
  const double se = std::sqrt(1.0 / 12.0 / n);
  CHECK(std::abs(mean - 0.5) <= 3 * se);
}

TEST_CASE("alpha construction follows the biased pattern") {
  const DirichletParams tr = build_alpha_train(0, 3, 0.6, 0.2);
  CHECK(tr.alpha == std::vector<double>{0.6, 0.2, 0.2});
  const DirichletParams tr2 = build_alpha_train(2, 3, 0.6, 0.2);
  CHECK(tr2.alpha == std::vector<double>{0.2, 0.2, 0.6});

  const DirichletParams obj = build_alpha_objective(0, 3, 0.6, 0.2);
  CHECK(obj.alpha == std::vector<double>{0.2, 0.6, 0.6});
  const DirichletParams obj2 = build_alpha_objective(1, 2, 0.6, 0.2);
  CHECK(obj2.alpha == std::vector<double>{0.6, 0.2});

  // swapping max and min converts one vector into the other
  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(build_alpha_train(s, 3, 0.2, 0.6).alpha ==
          build_alpha_objective(s, 3, 0.6, 0.2).alpha);
  }

  const DirichletParams flat = build_alpha_train(1, 4, 0.3, 0.3);
  CHECK(flat.alpha == std::vector<double>(4, 0.3));

  CHECK_THROWS_AS(build_alpha_train(3, 3, 0.6, 0.2), ConfigError);
  CHECK_THROWS_AS(build_alpha_objective(5, 2, 0.6, 0.2), ConfigError);
}

TEST_CASE("mix_rows at simplex vertices and midpoints") {
  const Matrix z1 = Matrix::from_rows({{1, 0}});
  const Matrix z2 = Matrix::from_rows({{0, 1}});
  const Matrix y1 = Matrix::from_rows({{1, 0}});
  const Matrix y2 = Matrix::from_rows({{0, 1}});
  const std::vector<const Matrix*> feats{&z1, &z2};
  const std::vector<const Matrix*> labels{&y1, &y2};

  const MixupSample vertex = mix_rows(feats, labels, MixupWeights{{1.0, 0.0}}, {0, 0});
  CHECK(vertex.feature == std::vector<double>{1, 0});
  CHECK(vertex.soft_label == std::vector<double>{1, 0});

  const MixupSample mid = mix_rows(feats, labels, MixupWeights{{0.5, 0.5}}, {0, 0});
  CHECK(mid.feature == std::vector<double>{0.5, 0.5});
  CHECK(mid.soft_label == std::vector<double>{0.5, 0.5});
}

TEST_CASE("dir_mixup output is the recorded convex combination") {
  Rng rng(35);
  const Matrix f0 = random_matrix(4, 3, rng);
  const Matrix f1 = random_matrix(6, 3, rng);
  const Matrix f2 = random_matrix(5, 3, rng);
  const Matrix l0 = onehot_rows({0, 1, 2, 0}, 4);
  const Matrix l1 = onehot_rows({3, 3, 1, 0, 2, 2}, 4);
  const Matrix l2 = onehot_rows({1, 1, 0, 3, 2}, 4);
  const std::vector<const Matrix*> feats{&f0, &f1, &f2};
  const std::vector<const Matrix*> labels{&l0, &l1, &l2};

  const MixupBatch batch =
      dir_mixup(feats, labels, build_alpha_train(0, 3, 0.6, 0.2), 50, rng);
  REQUIRE(batch.size() == 50);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    REQUIRE(batch.sources[i].size() == 3);
    double wsum = 0.0;
    std::vector<double> feat(3, 0.0), label(4, 0.0);
    for (const MixSource& src : batch.sources[i]) {
      wsum += src.weight;
      for (std::size_t j = 0; j < 3; ++j) {
        feat[j] += src.weight * feats[src.domain]->at(src.row, j);
      }
      for (std::size_t j = 0; j < 4; ++j) {
        label[j] += src.weight * labels[src.domain]->at(src.row, j);
      }
    }
    CHECK(std::abs(wsum - 1.0) <= 1e-12);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(std::abs(batch.features.at(i, j) - feat[j]) <= 1e-12);
    }
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(batch.labels.at(i, j) - label[j]) <= 1e-12);
    }
  }
}

TEST_CASE("dir_mixup labels stay on the simplex and features in the hull") {
  Rng rng(36);
  const Matrix f0 = random_matrix(5, 4, rng);
  const Matrix f1 = random_matrix(5, 4, rng);
  const Matrix l0 = onehot_rows({0, 1, 2, 2, 1}, 3);
  const Matrix l1 = onehot_rows({2, 0, 0, 1, 2}, 3);
  const std::vector<const Matrix*> feats{&f0, &f1};
  const std::vector<const Matrix*> labels{&l0, &l1};
  const MixupBatch batch =
      dir_mixup(feats, labels, DirichletParams{{0.2, 0.6}}, 200, rng);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(batch.labels.at(i, j) >= 0.0);
      sum += batch.labels.at(i, j);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    for (std::size_t j = 0; j < 4; ++j) {
      double lo = 1e300, hi = -1e300;
      for (const MixSource& src : batch.sources[i]) {
        lo = std::min(lo, feats[src.domain]->at(src.row, j));
        hi = std::max(hi, feats[src.domain]->at(src.row, j));
      }
      CHECK(batch.features.at(i, j) >= lo - 1e-12);
      CHECK(batch.features.at(i, j) <= hi + 1e-12);
    }
  }
}

TEST_CASE("identical one-hot labels are a mixup fixed point") {
  Rng rng(37);
  const Matrix f0 = random_matrix(3, 2, rng);
  const Matrix f1 = random_matrix(3, 2, rng);
  const Matrix y = onehot_rows({1, 1, 1}, 3);
  const MixupBatch batch = dir_mixup({&f0, &f1}, {&y, &y},
                                     DirichletParams{{0.6, 0.2}}, 40, rng);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    CHECK(std::abs(batch.labels.at(i, 1) - 1.0) <= 1e-12);
    CHECK(std::abs(batch.labels.at(i, 0)) <= 1e-12);
    CHECK(std::abs(batch.labels.at(i, 2)) <= 1e-12);
  }
}

TEST_CASE("mixup rejects empty batches and width mismatches") {
  Rng rng(38);
  const Matrix f0 = random_matrix(3, 2, rng);
  const Matrix empty(0, 2);
  const Matrix l0 = onehot_rows({0, 1, 0}, 2);
  CHECK_THROWS_AS(dir_mixup({&f0, &empty}, {&l0, &l0},
                            DirichletParams{{1, 1}}, 5, rng),
                  DataError);
  const Matrix wide = random_matrix(3, 5, rng);
  CHECK_THROWS_AS(dir_mixup({&f0, &wide}, {&l0, &l0},
                            DirichletParams{{1, 1}}, 5, rng),
                  ShapeError);
}

TEST_CASE("fixed seed reproduces the augmentation stream bitwise") {
  const Matrix f0 = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix f1 = Matrix::from_rows({{5, 6}, {7, 8}, {9, 10}});
  const Matrix l0 = onehot_rows({0, 1}, 2);
  const Matrix l1 = onehot_rows({1, 0, 1}, 2);
  Rng rng1(39), rng2(39);
  const MixupBatch a =
      dir_mixup({&f0, &f1}, {&l0, &l1}, DirichletParams{{0.6, 0.2}}, 30, rng1);
  const MixupBatch b =
      dir_mixup({&f0, &f1}, {&l0, &l1}, DirichletParams{{0.6, 0.2}}, 30, rng2);
  CHECK(a.features.data == b.features.data);
  CHECK(a.labels.data == b.labels.data);
}

TEST_CASE("classic mixup mixes exactly two pooled samples") {
  Rng rng(40);
  const Matrix f0 = random_matrix(4, 3, rng);
  const Matrix f1 = random_matrix(4, 3, rng);
  const Matrix l0 = onehot_rows({0, 1, 0, 1}, 2);
  const Matrix l1 = onehot_rows({1, 1, 0, 0}, 2);
  const MixupBatch batch = classic_mixup({&f0, &f1}, {&l0, &l1}, 0.2, 100, rng);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    REQUIRE(batch.sources[i].size() == 2);
    CHECK(std::abs(batch.sources[i][0].weight + batch.sources[i][1].weight - 1.0) <=
          1e-12);
  }
}

TEST_CASE("distilled labels with a single teacher equal its prediction") {
  BankSpec spec;
  spec.n_domains = 2;
  spec.input_dim = 4;
  spec.hidden_widths = {6};
  spec.feature_dim = 5;
  spec.num_classes = 3;
  spec.seed = 41;
  const ModelBank bank = make_bank(spec);
  Rng data_rng(42);
  const Matrix x = random_matrix(8, 4, data_rng);

  Rng rng(43);
  const Matrix distilled = distill_labels(x, bank, 0, rng);
  const Matrix teacher = predict(bank.models[1], x);
  for (std::size_t i = 0; i < distilled.data.size(); ++i) {
    CHECK(distilled.data[i] == teacher.data[i]);
  }
}

TEST_CASE("identical teachers make distillation a fixed point") {
  BankSpec spec;
  spec.n_domains = 3;
  spec.input_dim = 4;
  spec.hidden_widths = {6};
  spec.feature_dim = 5;
  spec.num_classes = 3;
  spec.seed = 44;
  ModelBank bank = make_bank(spec);
  bank.models[2].extractor = bank.models[1].extractor;
  bank.models[2].classifier = bank.models[1].classifier;
  Rng data_rng(45);
  const Matrix x = random_matrix(6, 4, data_rng);

  Rng rng(46);
  const Matrix distilled = distill_labels(x, bank, 0, rng);
  const Matrix teacher = predict(bank.models[1], x);
  for (std::size_t i = 0; i < distilled.data.size(); ++i) {
    CHECK(std::abs(distilled.data[i] - teacher.data[i]) <= 1e-12);
  }
  // rows remain distributions
  for (std::size_t r = 0; r < distilled.rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < distilled.cols; ++c) sum += distilled.at(r, c);
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("distillation requires at least two domains") {
  BankSpec spec;
  spec.n_domains = 1;
  spec.input_dim = 3;
  spec.hidden_widths = {4};
  spec.feature_dim = 3;
  spec.num_classes = 2;
  const ModelBank bank = make_bank(spec);
  Rng rng(47);
  CHECK_THROWS_AS(distill_labels(Matrix(2, 3, 0.1), bank, 0, rng), ConfigError);
}
