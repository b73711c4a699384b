#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "opendg/data.hpp"
#include "opendg/model.hpp"

#include "json.hpp"

namespace opendg {

// Sentinel predicted-class value for rejected (open) samples.
inline constexpr int kUnknown = -1;

struct EnsemblePrediction {
  std::vector<double> probs;  // mean of the per-model distributions
  double confidence = 0.0;    // max probability
  int predicted_class = 0;    // argmax, or kUnknown after rejection
};

// Confidence threshold calibrated as an order statistic of source
// validation confidences.
struct OpenSetDetector {
  double threshold = 0.0;
  double calibration_percentile = 5.0;

  bool rejects(double confidence) const { return confidence < threshold; }
};

struct EvalReport {
  std::optional<double> acc_known;    // absent when no known-class samples
  std::optional<double> acc_unknown;  // absent when no open samples
  std::optional<double> h_score;      // absent when either accuracy is
  double threshold = 0.0;
  std::map<int, double> per_class_acc;

  // Confusion counts.
  std::int64_t n_known = 0;
  std::int64_t n_open = 0;
  std::int64_t known_correct = 0;
  std::int64_t known_rejected = 0;
  std::int64_t open_rejected = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  static std::string csv_header();
  std::string csv_row(const std::string& method, std::uint64_t seed) const;
};

// Harmonic mean of the two accuracies; 0 when both are 0.
double h_score(double acc_known, double acc_unknown);

// Mean of the S predictive distributions per row, before any rejection.
std::vector<EnsemblePrediction> ensemble_predict(const ModelBank& bank,
                                                 const Matrix& x);

// Lower-interpolation order statistic: sorts ascending and returns the
// value at index floor(pct/100 * (n-1)). pct 0 yields the minimum.
double percentile_lower(std::vector<double> values, double pct);

// Marks every prediction with confidence below the threshold as kUnknown.
void apply_rejection(std::vector<EnsemblePrediction>& predictions,
                     const OpenSetDetector& detector);

// Pools ensemble confidences over all given validation batches, sorts them
// ascending and picks index floor(percentile/100 * (n-1)). Percentile 0 is
// allowed and yields the minimum.
OpenSetDetector calibrate_threshold(const ModelBank& bank,
                                    const std::vector<FeatureBatch>& validation,
                                    double percentile);

// Known-class samples count as correct when not rejected and the argmax
// matches; open samples count as correct when rejected.
EvalReport evaluate(const ModelBank& bank, const OpenSetDetector& detector,
                    const FeatureBatch& target);

}  // namespace opendg
