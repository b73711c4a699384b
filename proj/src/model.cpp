#include "opendg/model.hpp"

#include <cmath>
#include <fstream>

#include "opendg/errors.hpp"

namespace opendg {

void ModelGradients::add_scaled(const ModelGradients& other, double factor) {
  extractor.add_scaled(other.extractor, factor);
  classifier.add_scaled(other.classifier, factor);
}

void ModelGradients::scale(double factor) {
  extractor.scale(factor);
  classifier.scale(factor);
}

double ModelGradients::norm() const {
  return std::sqrt(extractor.squared_norm() + classifier.squared_norm());
}

ModelBank make_bank(const BankSpec& spec) {
  if (spec.n_domains == 0) throw ConfigError("make_bank: need at least one domain");
  if (spec.num_classes < 2) throw ConfigError("make_bank: need at least two classes");
  ModelBank bank;
  bank.input_dim = spec.input_dim;
  bank.feature_dim = spec.feature_dim;
  bank.num_classes = spec.num_classes;
  std::vector<std::size_t> extractor_widths;
  extractor_widths.push_back(spec.input_dim);
  for (auto w : spec.hidden_widths) extractor_widths.push_back(w);
  extractor_widths.push_back(spec.feature_dim);
  for (std::size_t s = 0; s < spec.n_domains; ++s) {
    Rng rng(derive_seed(spec.seed, 0x6d6f64656cULL, s));
    DomainModel model;
    model.domain_index = static_cast<int>(s);
    model.extractor = make_mlp(extractor_widths, Activation::kRelu,
                               Activation::kIdentity, rng);
    model.classifier = make_mlp({spec.feature_dim, spec.num_classes},
                                Activation::kIdentity, Activation::kIdentity, rng);
    bank.models.push_back(std::move(model));
  }
  return bank;
}

Matrix predict(const DomainModel& model, const Matrix& x) {
  return softmax_rows(mlp_forward(model.classifier, mlp_forward(model.extractor, x)));
}

Matrix extract(const DomainModel& model, const Matrix& x) {
  return mlp_forward(model.extractor, x);
}

void sgd_step(DomainModel& model, const ModelGradients& grads, double lr) {
  apply_gradients(model.extractor, grads.extractor, lr);
  apply_gradients(model.classifier, grads.classifier, lr);
}

ModelGradients zero_model_gradients(const DomainModel& model) {
  return ModelGradients{zero_gradients(model.extractor), zero_gradients(model.classifier)};
}

ModelSnapshot snapshot(const DomainModel& model) {
  return ModelSnapshot{model.domain_index, model.extractor, model.classifier};
}

void restore(DomainModel& model, const ModelSnapshot& snap) {
  if (!model.extractor.same_structure(snap.extractor) ||
      !model.classifier.same_structure(snap.classifier)) {
    throw ContractError("restore: snapshot structure does not match model");
  }
  model.extractor = snap.extractor;
  model.classifier = snap.classifier;
  model.domain_index = snap.domain_index;
}

namespace {

nlohmann::json mlp_to_json(const Mlp& mlp) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : mlp.layers) {
    layers.push_back({
        {"in", layer.in_dim()},
        {"out", layer.out_dim()},
        {"act", layer.act == Activation::kRelu ? "relu" : "identity"},
        {"weight", layer.weight.data},
        {"bias", layer.bias},
    });
  }
  return layers;
}

Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp mlp;
  for (const auto& lj : j) {
    Layer layer;
    const std::size_t in = lj.at("in").get<std::size_t>();
    const std::size_t out = lj.at("out").get<std::size_t>();
    const std::string act = lj.at("act").get<std::string>();
    if (act == "relu") {
      layer.act = Activation::kRelu;
    } else if (act == "identity") {
      layer.act = Activation::kIdentity;
    } else {
      throw ParseError("checkpoint: unknown activation '" + act + "'");
    }
    layer.weight = Matrix(in, out);
    auto weights = lj.at("weight").get<std::vector<double>>();
    if (weights.size() != in * out) {
      throw ParseError("checkpoint: weight count does not match layer shape");
    }
    layer.weight.data = std::move(weights);
    layer.bias = lj.at("bias").get<std::vector<double>>();
    if (layer.bias.size() != out) {
      throw ParseError("checkpoint: bias count does not match layer shape");
    }
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

}  // namespace

void save_checkpoint(const ModelBank& bank, const nlohmann::json& config_echo,
                     std::uint64_t seed, const std::string& path) {
  nlohmann::json j;
  j["config"] = config_echo;
  j["seed"] = seed;
  j["input_dim"] = bank.input_dim;
  j["feature_dim"] = bank.feature_dim;
  j["num_classes"] = bank.num_classes;
  nlohmann::json models = nlohmann::json::array();
  for (const auto& model : bank.models) {
    models.push_back({
        {"domain_index", model.domain_index},
        {"extractor", mlp_to_json(model.extractor)},
        {"classifier", mlp_to_json(model.classifier)},
    });
  }
  j["models"] = std::move(models);
  std::ofstream out(path);
  if (!out) throw DataError("save_checkpoint: cannot write " + path);
  out << j.dump(2) << "\n";
}

ModelBank load_checkpoint(const std::string& path, nlohmann::json* config_echo,
                          std::uint64_t* seed) {
  std::ifstream in(path);
  if (!in) throw DataError("load_checkpoint: cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_checkpoint: " + std::string(e.what()));
  }
  try {
    ModelBank bank;
    bank.input_dim = j.at("input_dim").get<std::size_t>();
    bank.feature_dim = j.at("feature_dim").get<std::size_t>();
    bank.num_classes = j.at("num_classes").get<std::size_t>();
    for (const auto& mj : j.at("models")) {
      DomainModel model;
      model.domain_index = mj.at("domain_index").get<int>();
      model.extractor = mlp_from_json(mj.at("extractor"));
      model.classifier = mlp_from_json(mj.at("classifier"));
      bank.models.push_back(std::move(model));
    }
    if (config_echo) *config_echo = j.value("config", nlohmann::json::object());
    if (seed) *seed = j.value("seed", std::uint64_t{0});
    return bank;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("load_checkpoint: " + std::string(e.what()));
  }
}

}  // namespace opendg
