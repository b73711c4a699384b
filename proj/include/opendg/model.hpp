#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "opendg/mlp.hpp"

#include "json.hpp"

namespace opendg {

// One source domain's network: feature extractor followed by a classifier
// over the union label set. All domains share feature_dim and class count.
struct DomainModel {
  int domain_index = 0;
  Mlp extractor;   // input_dim -> ... -> feature_dim
  Mlp classifier;  // feature_dim -> num_classes (softmax applied in predict)

  std::size_t input_dim() const { return extractor.input_dim(); }
  std::size_t feature_dim() const { return extractor.output_dim(); }
  std::size_t num_classes() const { return classifier.output_dim(); }
};

// Deep copy of one model's parameters; restore() is an exact inverse.
struct ModelSnapshot {
  int domain_index = 0;
  Mlp extractor;
  Mlp classifier;
};

struct ModelGradients {
  MlpGradients extractor;
  MlpGradients classifier;

  void add_scaled(const ModelGradients& other, double scale = 1.0);
  void scale(double factor);
  double norm() const;
};

struct ModelBank {
  std::vector<DomainModel> models;
  std::size_t input_dim = 0;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;

  std::size_t size() const { return models.size(); }
};

struct BankSpec {
  std::size_t n_domains = 3;
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden_widths{64, 64};
  std::size_t feature_dim = 32;
  std::size_t num_classes = 6;
  std::uint64_t seed = 0;
};

ModelBank make_bank(const BankSpec& spec);

// Class probabilities: softmax(G(F(x))). Rows sum to 1.
Matrix predict(const DomainModel& model, const Matrix& x);

// Feature map F(x), width feature_dim.
Matrix extract(const DomainModel& model, const Matrix& x);

// In-place p -= lr * g over both networks.
void sgd_step(DomainModel& model, const ModelGradients& grads, double lr);

ModelGradients zero_model_gradients(const DomainModel& model);

ModelSnapshot snapshot(const DomainModel& model);

// Throws ContractError if the snapshot's structure does not match.
void restore(DomainModel& model, const ModelSnapshot& snap);

// Checkpoint file: JSON with config echo, per-layer shapes, parameters in
// layer order, and the run seed. save/load round-trips parameters exactly.
void save_checkpoint(const ModelBank& bank, const nlohmann::json& config_echo,
                     std::uint64_t seed, const std::string& path);
ModelBank load_checkpoint(const std::string& path,
                          nlohmann::json* config_echo = nullptr,
                          std::uint64_t* seed = nullptr);

}  // namespace opendg
