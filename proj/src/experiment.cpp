#include "opendg/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ctime>
#include <iostream>

#include "opendg/analysis.hpp"
#include "opendg/errors.hpp"
#include "opendg/gradcheck.hpp"
#include "opendg/format.hpp"
#include "opendg/hash.hpp"

namespace opendg {

namespace fs = std::filesystem;

TrainConfig benchmark_train_defaults() {
  TrainConfig cfg;
  cfg.beta = 0.05;
  return cfg;
}

const std::vector<std::string>& known_methods() {
  static const std::vector<std::string> methods = {
      "daml",     "agg",     "meta_only",   "dmix_train",
      "dmix_obj", "dmix_both", "no_meta",   "classic_mix"};
  return methods;
}

const std::vector<std::string>& ablation_variants() {
  // Row order: meta-learning alone, the two Dir-mixup terms
  // separately and together, augmentations without meta-learning, classic
  // mixup with distillation, and full DAML.
  static const std::vector<std::string> rows = {
      "meta_only", "dmix_train", "dmix_obj", "dmix_both",
      "no_meta",   "classic_mix", "daml"};
  return rows;
}

void apply_method_toggles(TrainConfig& cfg, const std::string& method) {
  cfg.use_dmix_train = false;
  cfg.use_dmix_obj = false;
  cfg.use_distill = false;
  cfg.use_meta = true;
  cfg.use_classic_mixup = false;
  if (method == "daml") {
    cfg.use_dmix_train = cfg.use_dmix_obj = cfg.use_distill = true;
  } else if (method == "meta_only") {
    // all augmentation off
  } else if (method == "dmix_train") {
    cfg.use_dmix_train = true;
  } else if (method == "dmix_obj") {
    cfg.use_dmix_obj = true;
  } else if (method == "dmix_both") {
    cfg.use_dmix_train = cfg.use_dmix_obj = true;
  } else if (method == "no_meta") {
    cfg.use_dmix_train = cfg.use_dmix_obj = cfg.use_distill = true;
    cfg.use_meta = false;
  } else if (method == "classic_mix") {
    cfg.use_classic_mixup = true;
    cfg.use_distill = true;
  } else {
    throw ConfigError("unknown method '" + method + "'");
  }
}

void ExperimentConfig::validate() const {
  if (std::find(known_methods().begin(), known_methods().end(), method) ==
      known_methods().end()) {
    throw ConfigError("config field 'method': unknown value '" + method + "'");
  }
  if (seeds.empty()) {
    throw ConfigError("config field 'seeds': must not be empty");
  }
  if (calibration_percentile < 0.0 || calibration_percentile >= 100.0) {
    throw ConfigError("config field 'calibration_percentile': must lie in [0, 100)");
  }
  if (!(validation_fraction > 0.0) || !(validation_fraction < 1.0)) {
    throw ConfigError("config field 'validation_fraction': must lie in (0, 1)");
  }
  if (feature_dim == 0) {
    throw ConfigError("config field 'feature_dim': must be positive");
  }
  if (!source_csv.empty() && labelspec_json.empty()) {
    throw ConfigError("config field 'labelspec_json': required with source_csv");
  }
  if (!source_csv.empty() && target_csv.empty()) {
    throw ConfigError("config field 'target_csv': required with source_csv");
  }
  train.validate();
  if (source_csv.empty()) synth.validate();
}

namespace {

template <typename T>
T get_field(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config field '" + key + "': wrong type");
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    if (key == "eta") cfg.train.eta = get_field<double>(value, key);
    else if (key == "beta") cfg.train.beta = get_field<double>(value, key);
    else if (key == "alpha_max") cfg.train.alpha_max = get_field<double>(value, key);
    else if (key == "alpha_min") cfg.train.alpha_min = get_field<double>(value, key);
    else if (key == "epochs") cfg.train.epochs = get_field<int>(value, key);
    else if (key == "decay_epoch") cfg.train.decay_epoch = get_field<int>(value, key);
    else if (key == "decay_factor") cfg.train.decay_factor = get_field<double>(value, key);
    else if (key == "batch_size") cfg.train.batch_size = get_field<int>(value, key);
    else if (key == "momentum") cfg.train.momentum = get_field<double>(value, key);
    else if (key == "use_dmix_train") cfg.train.use_dmix_train = get_field<bool>(value, key);
    else if (key == "use_dmix_obj") cfg.train.use_dmix_obj = get_field<bool>(value, key);
    else if (key == "use_distill") cfg.train.use_distill = get_field<bool>(value, key);
    else if (key == "use_meta") cfg.train.use_meta = get_field<bool>(value, key);
    else if (key == "use_classic_mixup") cfg.train.use_classic_mixup = get_field<bool>(value, key);
    else if (key == "classic_mixup_alpha") cfg.train.classic_mixup_alpha = get_field<double>(value, key);
    else if (key == "sequential_update") cfg.train.sequential_update = get_field<bool>(value, key);
    else if (key == "foreign_extractor") cfg.train.foreign_extractor = get_field<bool>(value, key);
    else if (key == "n_domains") cfg.synth.n_domains = get_field<int>(value, key);
    else if (key == "classes_total") cfg.synth.classes_total = get_field<int>(value, key);
    else if (key == "input_dim") cfg.synth.input_dim = get_field<int>(value, key);
    else if (key == "samples_per_class") cfg.synth.samples_per_class = get_field<int>(value, key);
    else if (key == "prototype_scale") cfg.synth.prototype_scale = get_field<double>(value, key);
    else if (key == "domain_shift_scale") cfg.synth.domain_shift_scale = get_field<double>(value, key);
    else if (key == "noise_scale") cfg.synth.noise_scale = get_field<double>(value, key);
    else if (key == "data_seed") cfg.synth.seed = get_field<std::uint64_t>(value, key);
    else if (key == "labels") cfg.synth.labels = LabelSetSpec::from_json(value);
    else if (key == "source_csv") cfg.source_csv = get_field<std::vector<std::string>>(value, key);
    else if (key == "target_csv") cfg.target_csv = get_field<std::string>(value, key);
    else if (key == "labelspec_json") cfg.labelspec_json = get_field<std::string>(value, key);
    else if (key == "hidden_widths") cfg.hidden_widths = get_field<std::vector<std::size_t>>(value, key);
    else if (key == "feature_dim") cfg.feature_dim = get_field<std::size_t>(value, key);
    else if (key == "calibration_percentile") cfg.calibration_percentile = get_field<double>(value, key);
    else if (key == "validation_fraction") cfg.validation_fraction = get_field<double>(value, key);
    else if (key == "method") cfg.method = get_field<std::string>(value, key);
    else if (key == "out_dir") cfg.out_dir = get_field<std::string>(value, key);
    else if (key == "seeds") cfg.seeds = get_field<std::vector<std::uint64_t>>(value, key);
    else if (key == "analyze_include_self") cfg.analyze_include_self = get_field<bool>(value, key);
    else throw ConfigError("config field '" + key + "': unknown key");
  }
  cfg.validate();
  return cfg;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["eta"] = train.eta;
  j["beta"] = train.beta;
  j["alpha_max"] = train.alpha_max;
  j["alpha_min"] = train.alpha_min;
  j["epochs"] = train.epochs;
  j["decay_epoch"] = train.decay_epoch;
  j["decay_factor"] = train.decay_factor;
  j["batch_size"] = train.batch_size;
  j["momentum"] = train.momentum;
  j["use_dmix_train"] = train.use_dmix_train;
  j["use_dmix_obj"] = train.use_dmix_obj;
  j["use_distill"] = train.use_distill;
  j["use_meta"] = train.use_meta;
  j["use_classic_mixup"] = train.use_classic_mixup;
  j["classic_mixup_alpha"] = train.classic_mixup_alpha;
  j["sequential_update"] = train.sequential_update;
  j["foreign_extractor"] = train.foreign_extractor;
  j["n_domains"] = synth.n_domains;
  j["classes_total"] = synth.classes_total;
  j["input_dim"] = synth.input_dim;
  j["samples_per_class"] = synth.samples_per_class;
  j["prototype_scale"] = synth.prototype_scale;
  j["domain_shift_scale"] = synth.domain_shift_scale;
  j["noise_scale"] = synth.noise_scale;
  j["data_seed"] = synth.seed;
  j["labels"] = synth.labels.to_json();
  if (!source_csv.empty()) {
    j["source_csv"] = source_csv;
    j["target_csv"] = target_csv;
    j["labelspec_json"] = labelspec_json;
  }
  j["hidden_widths"] = hidden_widths;
  j["feature_dim"] = feature_dim;
  j["calibration_percentile"] = calibration_percentile;
  j["validation_fraction"] = validation_fraction;
  j["method"] = method;
  j["out_dir"] = out_dir;
  j["seeds"] = seeds;
  j["analyze_include_self"] = analyze_include_self;
  return j;
}

ResolvedData resolve_data(const ExperimentConfig& cfg) {
  ResolvedData data;
  std::vector<Dataset> sources;
  if (cfg.source_csv.empty()) {
    auto [srcs, target] = generate_synthetic(cfg.synth);
    sources = std::move(srcs);
    data.target = std::move(target);
    data.labels = cfg.synth.labels;
  } else {
    std::ifstream in(cfg.labelspec_json);
    if (!in) throw DataError("cannot read label spec " + cfg.labelspec_json);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("label spec " + cfg.labelspec_json + ": " + e.what());
    }
    data.labels = LabelSetSpec::from_json(j);
    if (cfg.source_csv.size() != data.labels.num_domains()) {
      throw ConfigError("config field 'source_csv': expected " +
                        std::to_string(data.labels.num_domains()) + " files");
    }
    for (std::size_t d = 0; d < cfg.source_csv.size(); ++d) {
      Dataset ds = load_csv(cfg.source_csv[d], data.labels);
      if (ds.domain_index != static_cast<int>(d)) {
        throw DataError("source file " + cfg.source_csv[d] + " holds domain " +
                        std::to_string(ds.domain_index) + ", expected " +
                        std::to_string(d));
      }
      sources.push_back(std::move(ds));
    }
    data.target = load_csv(cfg.target_csv, data.labels);
  }
  for (auto& src : sources) {
    auto [train_part, val_part] =
        split_validation(src, cfg.validation_fraction, cfg.synth.seed);
    data.train.push_back(std::move(train_part));
    data.validation.push_back(std::move(val_part));
  }
  return data;
}

namespace {

// AGG baseline: one network of the same per-domain capacity, plain SGD
// cross-entropy on the concatenation of the per-domain batches.
ModelBank train_agg(const ExperimentConfig& cfg, std::uint64_t seed,
                    const ResolvedData& data, TrainResult* log) {
  BankSpec bank_spec;
  bank_spec.n_domains = 1;
  bank_spec.input_dim = data.train[0].features.cols;
  bank_spec.hidden_widths = cfg.hidden_widths;
  bank_spec.feature_dim = cfg.feature_dim;
  bank_spec.num_classes = data.labels.num_classes();
  bank_spec.seed = seed;
  ModelBank bank = make_bank(bank_spec);
  DomainModel& model = bank.models[0];

  TrainConfig tc = cfg.train;
  tc.seed = seed;
  tc.validate();
  BatchIterator iter(&data.train, tc.batch_size, derive_seed(seed, 0x69746572ULL));
  const std::size_t steps = iter.steps_per_epoch();

  ModelGradients velocity = zero_model_gradients(model);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double beta_now =
        epoch >= tc.decay_epoch ? tc.beta / tc.decay_factor : tc.beta;
    for (std::size_t step = 0; step < steps; ++step) {
      const std::vector<FeatureBatch> batches = iter.next();
      std::size_t total_rows = 0;
      for (const auto& b : batches) total_rows += b.size();
      Matrix features(total_rows, bank.input_dim);
      Matrix labels(total_rows, bank.num_classes);
      std::size_t row = 0;
      for (const auto& b : batches) {
        std::copy(b.features.data.begin(), b.features.data.end(),
                  features.row_ptr(row));
        std::copy(b.labels.data.begin(), b.labels.data.end(), labels.row_ptr(row));
        row += b.size();
      }
      ForwardCache cache_f, cache_g;
      const Matrix feats = mlp_forward(model.extractor, features, &cache_f);
      const Matrix probs =
          softmax_rows(mlp_forward(model.classifier, feats, &cache_g));
      if (!all_finite(probs)) {
        throw NumericError("agg training: non-finite activations at epoch " +
                           std::to_string(epoch));
      }
      const double loss = soft_cross_entropy(probs, labels);
      if (!std::isfinite(loss)) {
        throw NumericError("agg training: non-finite loss at epoch " +
                           std::to_string(epoch));
      }
      const Matrix dlogits = soft_cross_entropy_logit_grad(probs, labels);
      Matrix dfeat;
      ModelGradients grads;
      grads.classifier = mlp_backward(model.classifier, cache_g, dlogits, &dfeat);
      grads.extractor = mlp_backward(model.extractor, cache_f, dfeat);
      if (tc.momentum > 0.0) {
        velocity.scale(tc.momentum);
        velocity.add_scaled(grads);
        sgd_step(model, velocity, beta_now);
      } else {
        sgd_step(model, grads, beta_now);
      }
      if (log) {
        log->log.push_back(TrainLogEntry{epoch, static_cast<int>(step), 0, loss,
                                         0.0, grads.norm()});
      }
    }
  }
  return bank;
}

}  // namespace

ModelBank train_method(const ExperimentConfig& cfg, std::uint64_t seed,
                       const ResolvedData& data, TrainResult* log) {
  if (data.train.empty()) throw DataError("train_method: no source datasets");
  if (cfg.method == "agg") {
    return train_agg(cfg, seed, data, log);
  }
  BankSpec bank_spec;
  bank_spec.n_domains = data.train.size();
  bank_spec.input_dim = data.train[0].features.cols;
  bank_spec.hidden_widths = cfg.hidden_widths;
  bank_spec.feature_dim = cfg.feature_dim;
  bank_spec.num_classes = data.labels.num_classes();
  bank_spec.seed = seed;
  ModelBank bank = make_bank(bank_spec);

  TrainConfig tc = cfg.train;
  tc.seed = seed;
  apply_method_toggles(tc, cfg.method);
  TrainResult result = train(bank, data.train, tc);
  if (log) *log = std::move(result);
  return bank;
}

EvalReport evaluate_bank(const ExperimentConfig& cfg, const ModelBank& bank,
                         const ResolvedData& data) {
  const OpenSetDetector detector =
      calibrate_threshold(bank, data.validation, cfg.calibration_percentile);
  return evaluate(bank, detector, data.target);
}

namespace {

std::string out_file(const ExperimentConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

void ensure_out_dir(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw DataError("cannot create output directory " + cfg.out_dir);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

void write_train_log(const std::string& path, const TrainResult& result) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& e : result.log) {
    nlohmann::json j = {{"epoch", e.epoch},       {"step", e.step},
                        {"domain", e.domain},     {"L_tr", e.l_tr},
                        {"L_obj", e.l_obj},       {"grad_norm", e.grad_norm}};
    out << j.dump() << "\n";
  }
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

struct Aggregate {
  double mean = 0.0;
  double stddev = 0.0;
};

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate agg;
  if (values.empty()) return agg;
  for (double v : values) agg.mean += v;
  agg.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
    agg.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return agg;
}

std::string inputs_hash(const ExperimentConfig& cfg, const ResolvedData& data) {
  Fnv1a64 h;
  h.update(cfg.to_json().dump());
  auto add_dataset = [&h](const Dataset& d) {
    h.update(d.features.data.data(), d.features.data.size() * sizeof(double));
    h.update(d.raw_class.data(), d.raw_class.size() * sizeof(int));
  };
  for (const auto& d : data.train) add_dataset(d);
  for (const auto& d : data.validation) add_dataset(d);
  add_dataset(data.target);
  return h.hex();
}

}  // namespace

std::string checkpoint_path(const ExperimentConfig& cfg, std::uint64_t seed) {
  return out_file(cfg, cfg.method + "_seed" + std::to_string(seed) + ".ckpt.json");
}

std::string report_path(const ExperimentConfig& cfg, std::uint64_t seed) {
  return out_file(cfg, cfg.method + "_seed" + std::to_string(seed) + ".report.json");
}

int cmd_generate(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.source_csv.empty()) {
    throw ConfigError("generate requires a synthetic data config, not CSV inputs");
  }
  ensure_out_dir(cfg);
  auto [sources, target] = generate_synthetic(cfg.synth);
  for (std::size_t d = 0; d < sources.size(); ++d) {
    save_csv(sources[d], out_file(cfg, "source_" + std::to_string(d) + ".csv"));
  }
  save_csv(target, out_file(cfg, "target.csv"));
  write_text(out_file(cfg, "labelspec.json"), cfg.synth.labels.to_json().dump(2) + "\n");
  std::cout << "generate: wrote " << sources.size() << " source files + target.csv + "
            << "labelspec.json to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  ensure_out_dir(cfg);
  const ResolvedData data = resolve_data(cfg);
  for (const std::uint64_t seed : cfg.seeds) {
    TrainResult log;
    const ModelBank bank = train_method(cfg, seed, data, &log);
    save_checkpoint(bank, cfg.to_json(), seed, checkpoint_path(cfg, seed));
    write_train_log(out_file(cfg, cfg.method + "_seed" + std::to_string(seed) +
                                      ".log.ndjson"),
                    log);
    const int last = cfg.train.epochs - 1;
    std::cout << "train: method=" << cfg.method << " seed=" << seed
              << " final_epoch_mean_L_tr=" << log.epoch_mean_loss_tr(last) << "\n";
  }
  return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint_override) {
  cfg.validate();
  ensure_out_dir(cfg);
  const ResolvedData data = resolve_data(cfg);
  const std::string started = timestamp_utc();

  std::vector<std::pair<std::uint64_t, EvalReport>> reports;
  if (!checkpoint_override.empty()) {
    std::uint64_t seed = 0;
    const ModelBank bank = load_checkpoint(checkpoint_override, nullptr, &seed);
    if (bank.input_dim != data.train[0].features.cols ||
        bank.num_classes != data.labels.num_classes()) {
      throw ContractError("checkpoint dimensions do not match the dataset");
    }
    reports.emplace_back(seed, evaluate_bank(cfg, bank, data));
  } else {
    for (const std::uint64_t seed : cfg.seeds) {
      const ModelBank bank = load_checkpoint(checkpoint_path(cfg, seed));
      if (bank.input_dim != data.train[0].features.cols ||
          bank.num_classes != data.labels.num_classes()) {
        throw ContractError("checkpoint dimensions do not match the dataset");
      }
      reports.emplace_back(seed, evaluate_bank(cfg, bank, data));
    }
  }

  std::string csv = EvalReport::csv_header() + "\n";
  nlohmann::json per_seed = nlohmann::json::object();
  std::vector<double> acc_known, acc_unknown, h_scores;
  for (const auto& [seed, report] : reports) {
    write_text(report_path(cfg, seed), report.to_json().dump(2) + "\n");
    csv += report.csv_row(cfg.method, seed) + "\n";
    per_seed[std::to_string(seed)] = report.to_json();
    if (report.acc_known) acc_known.push_back(*report.acc_known);
    if (report.acc_unknown) acc_unknown.push_back(*report.acc_unknown);
    if (report.h_score) h_scores.push_back(*report.h_score);
    std::cout << "evaluate: method=" << cfg.method << " seed=" << seed
              << " acc_known=" << (report.acc_known ? std::to_string(*report.acc_known) : "n/a")
              << " acc_unknown=" << (report.acc_unknown ? std::to_string(*report.acc_unknown) : "n/a")
              << " h_score=" << (report.h_score ? std::to_string(*report.h_score) : "n/a")
              << "\n";
  }
  write_text(out_file(cfg, "results.csv"), csv);

  nlohmann::json manifest;
  manifest["config"] = cfg.to_json();
  manifest["inputs_hash"] = inputs_hash(cfg, data);
  manifest["started"] = started;
  manifest["finished"] = timestamp_utc();
  manifest["per_seed"] = per_seed;
  auto agg_json = [](const std::vector<double>& v) {
    const Aggregate a = aggregate(v);
    return nlohmann::json{{"mean", a.mean}, {"stddev", a.stddev},
                          {"n", v.size()}};
  };
  manifest["aggregate"] = {{"acc_known", agg_json(acc_known)},
                           {"acc_unknown", agg_json(acc_unknown)},
                           {"h_score", agg_json(h_scores)}};
  write_text(out_file(cfg, "manifest.json"), manifest.dump(2) + "\n");
  return 0;
}

int cmd_ablate(const ExperimentConfig& cfg) {
  cfg.validate();
  ensure_out_dir(cfg);
  const ResolvedData data = resolve_data(cfg);

  std::string csv = "variant,seed,acc_known,acc_unknown,h_score,threshold\n";
  std::string summary = "variant,metric,mean,stddev,n\n";
  for (const std::string& variant : ablation_variants()) {
    ExperimentConfig vcfg = cfg;
    vcfg.method = variant;
    std::vector<double> acc_known, acc_unknown, h_scores;
    for (const std::uint64_t seed : cfg.seeds) {
      const ModelBank bank = train_method(vcfg, seed, data);
      const EvalReport report = evaluate_bank(vcfg, bank, data);
      const std::string row = report.csv_row(variant, seed);
      // csv_row starts with "method,seed", which doubles as "variant,seed".
      csv += row + "\n";
      if (report.acc_known) acc_known.push_back(*report.acc_known);
      if (report.acc_unknown) acc_unknown.push_back(*report.acc_unknown);
      if (report.h_score) h_scores.push_back(*report.h_score);
    }
    auto add_summary = [&](const char* metric, const std::vector<double>& v) {
      const Aggregate a = aggregate(v);
      summary += variant;
      summary += ",";
      summary += metric;
      summary += "," + std::to_string(a.mean) + "," + std::to_string(a.stddev) +
                 "," + std::to_string(v.size()) + "\n";
    };
    add_summary("acc_known", acc_known);
    add_summary("acc_unknown", acc_unknown);
    add_summary("h_score", h_scores);
    const Aggregate acc = aggregate(acc_known);
    std::cout << "ablate: " << variant << " mean_acc_known=" << acc.mean << "\n";
  }
  write_text(out_file(cfg, "ablation.csv"), csv);
  write_text(out_file(cfg, "ablation_summary.csv"), summary);
  return 0;
}

int cmd_gradcheck(const ExperimentConfig& cfg) {
  cfg.validate();
  const GradCheckReport report = run_gradient_checks(cfg.seeds.front());
  for (const auto& e : report.entries) {
    std::cout << (e.max_rel_err < 1e-4 ? "ok   " : "FAIL ") << e.name
              << " max_rel_err=" << e.max_rel_err << "\n";
  }
  std::cout << "gradcheck: worst=" << report.worst
            << (report.passed() ? " (pass)" : " (fail)") << "\n";
  return report.passed() ? 0 : 3;
}

namespace {

// Known-class target rows only, per the non-open-class protocol.
Matrix known_target_features(const Dataset& target) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target.class_index[i] != kOpenClass) rows.push_back(i);
  }
  return take_rows(target, rows).features;
}

void frechet_rows(std::string& csv, const std::string& method, const ModelBank& bank,
                  const ResolvedData& data, const Matrix& target_features,
                  bool include_self) {
  for (std::size_t s = 0; s < data.train.size(); ++s) {
    // Each source pairs with the model trained on it (single model for AGG).
    const DomainModel& model = bank.models[std::min(s, bank.size() - 1)];
    const DomainStats src = fit_stats(extract(model, data.train[s].features));
    const DomainStats tgt = fit_stats(extract(model, target_features));
    csv += method + "," + std::to_string(s) + ",target," +
           format_double(frechet_distance(src, tgt)) + "\n";
    if (include_self) {
      csv += method + "," + std::to_string(s) + "," + std::to_string(s) + "," +
             format_double(frechet_distance(src, src)) + "\n";
    }
  }
}

}  // namespace

int cmd_analyze(const ExperimentConfig& cfg, const std::string& checkpoint,
                const std::string& agg_checkpoint) {
  cfg.validate();
  if (checkpoint.empty()) {
    throw ConfigError("analyze requires --checkpoint");
  }
  ensure_out_dir(cfg);
  const ResolvedData data = resolve_data(cfg);
  const Matrix target_features = known_target_features(data.target);
  if (target_features.rows < 2) {
    throw DataError("analyze: need at least 2 known-class target samples");
  }

  std::string csv = "method,source_domain,target_domain,frechet_sq\n";
  nlohmann::json echo;
  const ModelBank bank = load_checkpoint(checkpoint, &echo);
  const std::string method = echo.value("method", std::string("daml"));
  frechet_rows(csv, method, bank, data, target_features, cfg.analyze_include_self);
  if (!agg_checkpoint.empty()) {
    nlohmann::json agg_echo;
    const ModelBank agg_bank = load_checkpoint(agg_checkpoint, &agg_echo);
    frechet_rows(csv, agg_echo.value("method", std::string("agg")), agg_bank, data,
                 target_features, cfg.analyze_include_self);
  }
  write_text(out_file(cfg, "frechet.csv"), csv);
  std::cout << "analyze: wrote " << out_file(cfg, "frechet.csv") << "\n";
  return 0;
}

}  // namespace opendg
