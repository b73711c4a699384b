// Command-line front end: generate | train | evaluate | ablate | gradcheck
// | analyze, driven by one flat JSON config with per-flag overrides.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "opendg/errors.hpp"
#include "opendg/experiment.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::int64_t seed = -1;
  bool has_seed = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
  cmd->add_option("--seed", args.seed, "run a single seed (overrides config)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--override", args.overrides,
                  "key=value config override, repeatable");
}

opendg::ExperimentConfig build_config(const CommonArgs& args) {
  nlohmann::json doc = nlohmann::json::object();
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw opendg::DataError("cannot read config " + args.config_path);
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw opendg::ParseError("config " + args.config_path + ": " + e.what());
    }
  }
  for (const std::string& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw opendg::ConfigError("--override expects key=value, got '" + kv + "'");
    }
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
    doc[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
  }
  if (!args.out_dir.empty()) doc["out_dir"] = args.out_dir;
  if (args.seed >= 0 && args.overrides.end() ==
      std::find_if(args.overrides.begin(), args.overrides.end(),
                   [](const std::string& s) { return s.rfind("seeds=", 0) == 0; })) {
    doc["seeds"] = {static_cast<std::uint64_t>(args.seed)};
  }
  return opendg::ExperimentConfig::from_json(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open domain generalization via domain-augmented meta-learning"};
  app.require_subcommand(1);

  CommonArgs generate_args, train_args, evaluate_args, ablate_args,
      gradcheck_args, analyze_args;
  std::string eval_checkpoint, analyze_checkpoint, analyze_agg_checkpoint;

  add_common(app.add_subcommand("generate", "write synthetic dataset CSVs"),
             generate_args);
  add_common(app.add_subcommand("train", "train the configured method per seed"),
             train_args);
  auto* eval_cmd =
      app.add_subcommand("evaluate", "calibrate, evaluate target, write reports");
  add_common(eval_cmd, evaluate_args);
  eval_cmd->add_option("--checkpoint", eval_checkpoint,
                       "evaluate one checkpoint file instead of the per-seed set");
  add_common(app.add_subcommand("ablate", "run the ablation grid over all seeds"),
             ablate_args);
  add_common(app.add_subcommand("gradcheck", "finite-difference gradient checks"),
             gradcheck_args);
  auto* analyze_cmd =
      app.add_subcommand("analyze", "Frechet distances between source and target");
  add_common(analyze_cmd, analyze_args);
  analyze_cmd->add_option("--checkpoint", analyze_checkpoint, "checkpoint to analyze")
      ->required();
  analyze_cmd->add_option("--agg-checkpoint", analyze_agg_checkpoint,
                          "optional AGG checkpoint for comparison rows");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("generate")) {
      return opendg::cmd_generate(build_config(generate_args));
    }
    if (app.got_subcommand("train")) {
      return opendg::cmd_train(build_config(train_args));
    }
    if (app.got_subcommand("evaluate")) {
      return opendg::cmd_evaluate(build_config(evaluate_args), eval_checkpoint);
    }
    if (app.got_subcommand("ablate")) {
      return opendg::cmd_ablate(build_config(ablate_args));
    }
    if (app.got_subcommand("gradcheck")) {
      return opendg::cmd_gradcheck(build_config(gradcheck_args));
    }
    if (app.got_subcommand("analyze")) {
      return opendg::cmd_analyze(build_config(analyze_args), analyze_checkpoint,
                                 analyze_agg_checkpoint);
    }
  } catch (const opendg::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const opendg::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
