#include <cmath>

#include "doctest.h"
#include "opendg/errors.hpp"
#include "opendg/inference.hpp"
#include "opendg/rng.hpp"

using namespace opendg;

namespace {

BankSpec small_spec(std::uint64_t seed = 101) {
  BankSpec spec;
  spec.n_domains = 3;
  spec.input_dim = 4;
  spec.hidden_widths = {8};
  spec.feature_dim = 6;
  spec.num_classes = 4;
  spec.seed = seed;
  return spec;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data) v = rng.normal();
  return m;
}

FeatureBatch batch_from(const Matrix& features, const std::vector<int>& classes,
                        std::size_t n_classes) {
  FeatureBatch b;
  b.features = features;
  b.labels = Matrix(features.rows, n_classes);
  b.class_index = classes;
  b.raw_class = classes;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] != kOpenClass) {
      b.labels.at(i, static_cast<std::size_t>(classes[i])) = 1.0;
    }
  }
  return b;
}

void zero_params(DomainModel& model) {
  for (Mlp* mlp : {&model.extractor, &model.classifier}) {
    for (auto& layer : mlp->layers) {
      for (auto& w : layer.weight.data) w = 0.0;
      for (auto& b : layer.bias) b = 0.0;
    }
  }
}

}  // namespace

TEST_CASE("h_score closed form") {
  CHECK(h_score(0.5, 0.5) == 0.5);
  CHECK(h_score(1.0, 0.0) == 0.0);
  CHECK(h_score(0.0, 0.0) == 0.0);
  Rng rng(102);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform();
    const double b = rng.uniform();
    const double h = h_score(a, b);
    if (a + b > 0) {
      CHECK(std::abs(h - 2 * a * b / (a + b)) <= 1e-12);
      CHECK(h <= 2 * std::min(a, b) + 1e-12);
      CHECK(h <= (a + b) / 2 + 1e-12);
    }
  }
}

TEST_CASE("ensemble of identical models equals the single model") {
  ModelBank bank = make_bank(small_spec());
  for (auto& m : bank.models) {
    m.extractor = bank.models[0].extractor;
    m.classifier = bank.models[0].classifier;
  }
  Rng rng(103);
  const Matrix x = random_matrix(6, 4, rng);
  const Matrix single = predict(bank.models[0], x);
  const auto preds = ensemble_predict(bank, x);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(preds[i].probs[k] == doctest::Approx(single.at(i, k)).epsilon(1e-12));
    }
    CHECK(preds[i].confidence ==
          *std::max_element(preds[i].probs.begin(), preds[i].probs.end()));
  }
}

TEST_CASE("opposing experts average to half confidence") {
  BankSpec spec = small_spec();
  spec.n_domains = 2;
  spec.num_classes = 2;
  spec.hidden_widths = {};
  spec.input_dim = 2;
  spec.feature_dim = 2;
  ModelBank bank = make_bank(spec);
  for (auto& model : bank.models) {
    zero_params(model);
    model.extractor.layers[0].weight = Matrix::identity(2);
  }
  // model 0 says class 0, model 1 says class 1, both with huge margins
  bank.models[0].classifier.layers[0].bias = {100.0, 0.0};
  bank.models[1].classifier.layers[0].bias = {0.0, 100.0};

  const auto preds = ensemble_predict(bank, Matrix(1, 2, 0.0));
  CHECK(preds[0].probs[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(preds[0].probs[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(preds[0].confidence == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ensemble means stay on the simplex and ignore model order") {
  ModelBank bank = make_bank(small_spec(104));
  Rng rng(105);
  const Matrix x = random_matrix(10, 4, rng);
  const auto preds = ensemble_predict(bank, x);
  for (const auto& p : preds) {
    double sum = 0.0;
    for (double v : p.probs) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }

  ModelBank reversed = bank;
  std::reverse(reversed.models.begin(), reversed.models.end());
  const auto rpreds = ensemble_predict(reversed, x);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(std::abs(preds[i].probs[k] - rpreds[i].probs[k]) <= 1e-12);
    }
  }
}

TEST_CASE("percentile_lower picks the stated order statistic") {
  std::vector<double> v{1.0, 0.2, 0.4, 0.3, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1};
  CHECK(percentile_lower(v, 5.0) == 0.1);   // floor(0.05 * 9) = 0
  CHECK(percentile_lower(v, 0.0) == 0.1);   // boundary: minimum
  CHECK(percentile_lower(v, 50.0) == 0.5);  // floor(0.5 * 9) = 4
  CHECK(percentile_lower(v, 99.0) == 0.9);  // floor(0.99 * 9) = 8
  CHECK_THROWS_AS(percentile_lower(v, 100.0), ConfigError);
  CHECK_THROWS_AS(percentile_lower({}, 5.0), DataError);
}

TEST_CASE("calibration on constant confidences returns that constant") {
  ModelBank bank = make_bank(small_spec(106));
  for (auto& m : bank.models) zero_params(m);  // uniform output everywhere
  Rng rng(107);
  const std::vector<FeatureBatch> validation = {
      batch_from(random_matrix(8, 4, rng), {0, 1, 2, 3, 0, 1, 2, 3}, 4)};
  for (double pct : {0.0, 5.0, 50.0}) {
    const OpenSetDetector det = calibrate_threshold(bank, validation, pct);
    CHECK(det.threshold == doctest::Approx(0.25).epsilon(1e-12));
  }
  CHECK_THROWS_AS(calibrate_threshold(bank, {}, 5.0), DataError);
}

TEST_CASE("percentile zero rejects exactly the sub-minimum confidences") {
  ModelBank bank = make_bank(small_spec(108));
  Rng rng(109);
  const std::vector<FeatureBatch> validation = {
      batch_from(random_matrix(30, 4, rng), std::vector<int>(30, 0), 4)};
  const OpenSetDetector det = calibrate_threshold(bank, validation, 0.0);

  double min_conf = 1.0;
  for (const auto& p : ensemble_predict(bank, validation[0].features)) {
    min_conf = std::min(min_conf, p.confidence);
  }
  CHECK(det.threshold == doctest::Approx(min_conf).epsilon(1e-15));

  const FeatureBatch target = batch_from(random_matrix(40, 4, rng),
                                         std::vector<int>(40, kOpenClass), 4);
  const EvalReport report = evaluate(bank, det, target);
  std::size_t below = 0;
  for (const auto& p : ensemble_predict(bank, target.features)) {
    if (p.confidence < min_conf) ++below;
  }
  REQUIRE(report.acc_unknown.has_value());
  CHECK(*report.acc_unknown ==
        doctest::Approx(static_cast<double>(below) / 40).epsilon(1e-12));
  CHECK(!report.acc_known.has_value());
  CHECK(!report.h_score.has_value());
}

TEST_CASE("evaluate on a perfect closed-set classifier") {
  BankSpec spec;
  spec.n_domains = 2;
  spec.input_dim = 3;
  spec.hidden_widths = {};
  spec.feature_dim = 3;
  spec.num_classes = 3;
  spec.seed = 110;
  ModelBank bank = make_bank(spec);
  for (auto& model : bank.models) {
    model.extractor.layers[0].weight = Matrix::identity(3);
    model.extractor.layers[0].bias.assign(3, 0.0);
    model.classifier.layers[0].weight = Matrix::identity(3);
    for (auto& v : model.classifier.layers[0].weight.data) v *= 40.0;
    model.classifier.layers[0].bias.assign(3, 0.0);
  }
  const FeatureBatch target = batch_from(Matrix::identity(3), {0, 1, 2}, 3);
  OpenSetDetector det;
  det.threshold = 0.0;
  const EvalReport report = evaluate(bank, det, target);
  REQUIRE(report.acc_known.has_value());
  CHECK(*report.acc_known == 1.0);
  CHECK(!report.acc_unknown.has_value());
  CHECK(!report.h_score.has_value());
  CHECK(report.per_class_acc.at(0) == 1.0);
  CHECK(report.per_class_acc.at(2) == 1.0);
}

TEST_CASE("raising the threshold is monotone for both accuracies") {
  ModelBank bank = make_bank(small_spec(111));
  Rng rng(112);
  Matrix features = random_matrix(60, 4, rng);
  std::vector<int> classes;
  for (std::size_t i = 0; i < 60; ++i) {
    classes.push_back(i % 5 == 0 ? kOpenClass : static_cast<int>(i % 4));
  }
  const FeatureBatch target = batch_from(features, classes, 4);

  double prev_known = 2.0, prev_unknown = -1.0;
  for (int i = 0; i <= 50; ++i) {
    OpenSetDetector det;
    det.threshold = static_cast<double>(i) / 50.0;
    const EvalReport r = evaluate(bank, det, target);
    const double known = r.acc_known.value();
    const double unknown = r.acc_unknown.value();
    CHECK(known <= prev_known + 1e-12);
    CHECK(unknown >= prev_unknown - 1e-12);
    prev_known = known;
    prev_unknown = unknown;
  }
}

TEST_CASE("harmonic mean fixed points inside evaluate") {
  ModelBank bank = make_bank(small_spec(113));
  Rng rng(114);
  const FeatureBatch target = batch_from(
      random_matrix(20, 4, rng),
      {0, 1, 2, 3, 0, 1, 2, 3, 0, 1, kOpenClass, kOpenClass, kOpenClass, kOpenClass,
       kOpenClass, kOpenClass, kOpenClass, kOpenClass, kOpenClass, kOpenClass},
      4);
  OpenSetDetector det;
  det.threshold = 0.5;
  const EvalReport r = evaluate(bank, det, target);
  REQUIRE(r.acc_known.has_value());
  REQUIRE(r.acc_unknown.has_value());
  REQUIRE(r.h_score.has_value());
  CHECK(*r.h_score == doctest::Approx(h_score(*r.acc_known, *r.acc_unknown))
                          .epsilon(1e-12));
}

TEST_CASE("apply_rejection flags exactly the sub-threshold rows") {
  std::vector<EnsemblePrediction> preds(3);
  preds[0].confidence = 0.9;
  preds[0].predicted_class = 2;
  preds[1].confidence = 0.3;
  preds[1].predicted_class = 1;
  preds[2].confidence = 0.5;
  preds[2].predicted_class = 0;
  OpenSetDetector det;
  det.threshold = 0.5;
  apply_rejection(preds, det);
  CHECK(preds[0].predicted_class == 2);
  CHECK(preds[1].predicted_class == kUnknown);
  CHECK(preds[2].predicted_class == 0);  // equality is not rejection
}

TEST_CASE("EvalReport serializes with fixed keys and round-trips") {
  EvalReport r;
  r.acc_known = 0.75;
  r.acc_unknown = 0.5;
  r.h_score = h_score(0.75, 0.5);
  r.threshold = 0.4;
  r.per_class_acc[0] = 1.0;
  r.per_class_acc[3] = 0.25;
  r.n_known = 8;
  r.n_open = 4;
  r.known_correct = 6;
  r.open_rejected = 2;

  const nlohmann::json j = r.to_json();
  CHECK(j.contains("acc_known"));
  CHECK(j.contains("acc_unknown"));
  CHECK(j.contains("h_score"));
  CHECK(j.contains("threshold"));
  CHECK(j.contains("per_class_acc"));
  const EvalReport back = EvalReport::from_json(j);
  CHECK(back.acc_known == r.acc_known);
  CHECK(back.per_class_acc == r.per_class_acc);
  CHECK(back.n_open == 4);

  EvalReport no_open;
  no_open.acc_known = 1.0;
  no_open.threshold = 0.1;
  const nlohmann::json j2 = no_open.to_json();
  CHECK(!j2.contains("acc_unknown"));
  CHECK(!j2.contains("h_score"));

  CHECK(r.csv_row("daml", 3) ==
        "daml,3,0.75,0.5,0.6,0.4");
}
