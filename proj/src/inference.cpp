#include "opendg/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "opendg/errors.hpp"
#include "opendg/format.hpp"

namespace opendg {

double h_score(double acc_known, double acc_unknown) {
  const double sum = acc_known + acc_unknown;
  if (sum == 0.0) return 0.0;
  return 2.0 * acc_known * acc_unknown / sum;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  if (acc_known) j["acc_known"] = *acc_known;
  if (acc_unknown) j["acc_unknown"] = *acc_unknown;
  if (h_score) j["h_score"] = *h_score;
  j["threshold"] = threshold;
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [cls, acc] : per_class_acc) {
    per_class[std::to_string(cls)] = acc;
  }
  j["per_class_acc"] = per_class;
  j["counts"] = {{"n_known", n_known},
                 {"n_open", n_open},
                 {"known_correct", known_correct},
                 {"known_rejected", known_rejected},
                 {"open_rejected", open_rejected}};
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  if (j.contains("acc_known")) r.acc_known = j["acc_known"].get<double>();
  if (j.contains("acc_unknown")) r.acc_unknown = j["acc_unknown"].get<double>();
  if (j.contains("h_score")) r.h_score = j["h_score"].get<double>();
  r.threshold = j.at("threshold").get<double>();
  for (const auto& [key, val] : j.at("per_class_acc").items()) {
    r.per_class_acc[std::stoi(key)] = val.get<double>();
  }
  const auto& c = j.at("counts");
  r.n_known = c.at("n_known").get<std::int64_t>();
  r.n_open = c.at("n_open").get<std::int64_t>();
  r.known_correct = c.at("known_correct").get<std::int64_t>();
  r.known_rejected = c.at("known_rejected").get<std::int64_t>();
  r.open_rejected = c.at("open_rejected").get<std::int64_t>();
  return r;
}

namespace {

std::string opt_cell(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

}  // namespace

std::string EvalReport::csv_header() {
  return "method,seed,acc_known,acc_unknown,h_score,threshold";
}

std::string EvalReport::csv_row(const std::string& method, std::uint64_t seed) const {
  return method + "," + std::to_string(seed) + "," + opt_cell(acc_known) + "," +
         opt_cell(acc_unknown) + "," + opt_cell(h_score) + "," +
         format_double(threshold);
}

std::vector<EnsemblePrediction> ensemble_predict(const ModelBank& bank,
                                                 const Matrix& x) {
  if (bank.size() == 0) throw ConfigError("ensemble_predict: empty model bank");
  Matrix mean(x.rows, bank.num_classes);
  for (const auto& model : bank.models) {
    add_scaled(mean, predict(model, x));
  }
  const double inv = 1.0 / static_cast<double>(bank.size());
  for (auto& v : mean.data) v *= inv;

  std::vector<EnsemblePrediction> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    EnsemblePrediction& p = out[i];
    p.probs.assign(mean.row_ptr(i), mean.row_ptr(i) + mean.cols);
    std::size_t arg = 0;
    for (std::size_t k = 1; k < p.probs.size(); ++k) {
      if (p.probs[k] > p.probs[arg]) arg = k;
    }
    p.predicted_class = static_cast<int>(arg);
    p.confidence = p.probs[arg];
  }
  return out;
}

double percentile_lower(std::vector<double> values, double pct) {
  if (values.empty()) throw DataError("percentile_lower: no values");
  if (pct < 0.0 || pct >= 100.0) {
    throw ConfigError("percentile_lower: percentile must lie in [0, 100)");
  }
  std::sort(values.begin(), values.end());
  const auto idx = static_cast<std::size_t>(
      std::floor(pct / 100.0 * static_cast<double>(values.size() - 1)));
  return values[idx];
}

void apply_rejection(std::vector<EnsemblePrediction>& predictions,
                     const OpenSetDetector& detector) {
  for (auto& p : predictions) {
    if (detector.rejects(p.confidence)) p.predicted_class = kUnknown;
  }
}

OpenSetDetector calibrate_threshold(const ModelBank& bank,
                                    const std::vector<FeatureBatch>& validation,
                                    double percentile) {
  if (percentile < 0.0 || percentile >= 100.0) {
    throw ConfigError("calibrate_threshold: percentile must lie in [0, 100)");
  }
  std::vector<double> confidences;
  for (const auto& batch : validation) {
    for (const auto& pred : ensemble_predict(bank, batch.features)) {
      confidences.push_back(pred.confidence);
    }
  }
  if (confidences.empty()) {
    throw DataError("calibrate_threshold: no validation samples");
  }
  OpenSetDetector detector;
  detector.threshold = percentile_lower(std::move(confidences), percentile);
  detector.calibration_percentile = percentile;
  return detector;
}

EvalReport evaluate(const ModelBank& bank, const OpenSetDetector& detector,
                    const FeatureBatch& target) {
  if (target.size() == 0) throw DataError("evaluate: empty target batch");
  auto preds = ensemble_predict(bank, target.features);
  apply_rejection(preds, detector);

  EvalReport report;
  report.threshold = detector.threshold;
  std::map<int, std::pair<std::int64_t, std::int64_t>> per_class;  // n, correct
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool rejected = preds[i].predicted_class == kUnknown;
    const int truth = target.class_index[i];
    if (truth == kOpenClass) {
      ++report.n_open;
      if (rejected) ++report.open_rejected;
    } else {
      ++report.n_known;
      auto& [n, correct] = per_class[truth];
      ++n;
      if (rejected) {
        ++report.known_rejected;
      } else if (preds[i].predicted_class == truth) {
        ++report.known_correct;
        ++correct;
      }
    }
  }
  if (report.n_known > 0) {
    report.acc_known = static_cast<double>(report.known_correct) /
                       static_cast<double>(report.n_known);
    for (const auto& [cls, counts] : per_class) {
      report.per_class_acc[cls] = static_cast<double>(counts.second) /
                                  static_cast<double>(counts.first);
    }
  }
  if (report.n_open > 0) {
    report.acc_unknown = static_cast<double>(report.open_rejected) /
                         static_cast<double>(report.n_open);
  }
  if (report.acc_known && report.acc_unknown) {
    report.h_score = h_score(*report.acc_known, *report.acc_unknown);
  }
  return report;
}

}  // namespace opendg
