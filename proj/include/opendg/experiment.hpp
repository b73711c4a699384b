#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "opendg/data.hpp"
#include "opendg/inference.hpp"
#include "opendg/meta.hpp"

#include "json.hpp"

namespace opendg {

// Ablation-grid method tags. "agg" is the merged-data single-network
// baseline; the rest select loss-term toggles on the meta trainer.
const std::vector<std::string>& known_methods();
const std::vector<std::string>& ablation_variants();  // the 7 table rows
void apply_method_toggles(TrainConfig& cfg, const std::string& method);

// TrainConfig defaults suit fine-tuning a pretrained backbone; randomly
// initialized desk-scale MLPs need a larger outer rate, so the benchmark
// profile raises beta. Everything else is unchanged.
TrainConfig benchmark_train_defaults();

// One flat JSON document drives every subcommand; keys mirror the
// TrainConfig and SyntheticSpec field names one-for-one.
struct ExperimentConfig {
  TrainConfig train = benchmark_train_defaults();
  SyntheticSpec synth;

  // When source_csv is nonempty, data comes from files instead of the
  // synthetic generator; labelspec_json is then required.
  std::vector<std::string> source_csv;
  std::string target_csv;
  std::string labelspec_json;

  std::vector<std::size_t> hidden_widths{64, 64};
  std::size_t feature_dim = 32;

  double calibration_percentile = 5.0;
  double validation_fraction = 0.1;
  std::string method = "daml";
  std::string out_dir = "out";
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  bool analyze_include_self = false;

  void validate() const;
  static ExperimentConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

// Sources (with per-domain train/validation split) plus the target set.
struct ResolvedData {
  std::vector<Dataset> train;
  std::vector<Dataset> validation;
  Dataset target;
  LabelSetSpec labels;
};

ResolvedData resolve_data(const ExperimentConfig& cfg);

// Trains one seed of the configured method: a full DAML bank, one of its
// ablation variants, or the AGG baseline (a single network of the same
// capacity trained with plain SGD on the merged source batches).
ModelBank train_method(const ExperimentConfig& cfg, std::uint64_t seed,
                       const ResolvedData& data, TrainResult* log = nullptr);

EvalReport evaluate_bank(const ExperimentConfig& cfg, const ModelBank& bank,
                         const ResolvedData& data);

std::string checkpoint_path(const ExperimentConfig& cfg, std::uint64_t seed);
std::string report_path(const ExperimentConfig& cfg, std::uint64_t seed);

// Subcommand entry points; return a process exit code.
int cmd_generate(const ExperimentConfig& cfg);
int cmd_train(const ExperimentConfig& cfg);
int cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint_override = "");
int cmd_ablate(const ExperimentConfig& cfg);
int cmd_gradcheck(const ExperimentConfig& cfg);
int cmd_analyze(const ExperimentConfig& cfg, const std::string& checkpoint,
                const std::string& agg_checkpoint = "");

}  // namespace opendg
