#include <iostream>

#include "CLI11.hpp"
#include "painforge/cli/commands.hpp"
#include "painforge/core/errors.hpp"

using namespace painforge;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"painforge: synthetic pain-expression data, ViT training and evaluation"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "render a synthetic dataset");
  generate->add_option("--config", gen.config, "run config file")->required();
  generate->add_option("--seed", gen.seed, "override the config seed");
  generate->add_option("--out", gen.out, "dataset directory (default <output_root>/data)");
  generate->add_flag("--resume", gen.resume, "keep identities that finished in an earlier run");

  TrainArgs tr;
  std::string role = "student";
  auto* train = app.add_subcommand("train", "train a teacher, student or baseline model");
  train->add_option("--config", tr.config, "run config file")->required();
  train->add_option("--role", role, "teacher | student | baseline")->required();
  train->add_option("--data", tr.data, "manifest.jsonl or dataset directory")->required();
  train->add_option("--teacher", tr.teacher, "teacher checkpoint for distillation");
  train->add_option("--out", tr.out, "checkpoint directory");
  train->add_option("--seed", tr.seed, "override the config seed");
  train->add_option("--epochs", tr.epochs, "override train.epochs");
  train->add_option("--folds", tr.folds, "subject k-fold plan size");
  train->add_option("--fold", tr.fold, "fold held out for testing");

  EvaluateArgs ev;
  std::string thresholds;
  bool holdout = false;
  auto* evaluate = app.add_subcommand("evaluate", "evaluate checkpoints on their held-out subjects");
  evaluate->add_option("--config", ev.config, "run config file");
  evaluate->add_option("--ckpt", ev.checkpoints, "checkpoint directory (one per fold)")->required();
  evaluate->add_option("--data", ev.data, "manifest.jsonl or dataset directory")->required();
  auto* folds_opt = evaluate->add_option("--folds", ev.folds, "k-fold evaluation, checkpoint i on fold i");
  auto* holdout_opt = evaluate->add_flag("--holdout", holdout, "use the checkpoint's recorded test subjects");
  folds_opt->excludes(holdout_opt);
  evaluate->add_option("--thresholds", thresholds, "binary PSPI thresholds, e.g. 2,3");
  evaluate->add_option("--out", ev.out, "report path");
  evaluate->add_option("--seed", ev.seed, "fold plan seed");

  PipelineArgs pipe;
  auto* pipeline = app.add_subcommand("pipeline", "generate, train all models, evaluate and compare");
  pipeline->add_option("--config", pipe.config, "run config file")->required();
  pipeline->add_option("--seed", pipe.seed, "override the config seed");
  pipeline->add_option("--out", pipe.out, "override output_root");
  pipeline->add_flag("--resume", pipe.resume, "reuse finished stages");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*generate) {
      cmd_generate(gen, std::cout);
    } else if (*train) {
      tr.role = parse_role(role);
      cmd_train(tr, std::cout);
    } else if (*evaluate) {
      if (!thresholds.empty()) ev.thresholds = parse_thresholds(thresholds);
      cmd_evaluate(ev, std::cout);
    } else if (*pipeline) {
      cmd_pipeline(pipe, std::cout);
    }
  } catch (const std::exception& e) {
    std::cout.flush();
    std::cerr << "painforge: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitOk;
}
