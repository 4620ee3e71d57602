#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "painforge/cli/run_config.hpp"
#include "painforge/synth/dataset.hpp"
#include "painforge/train/trainer.hpp"

namespace painforge {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

/// Maps an exception to its exit code: ConfigError is a usage error, anything
/// else a runtime failure.
int exit_code_for(const std::exception& e);

struct GenerateArgs {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;  // default <output_root>/data
  bool resume = false;
};

BuildResult cmd_generate(const GenerateArgs& args, std::ostream& log);

struct TrainArgs {
  std::filesystem::path config;
  Role role = Role::Student;
  std::filesystem::path data;
  std::optional<std::filesystem::path> teacher;
  std::optional<std::filesystem::path> out;  // default <output_root>/checkpoints/<role>
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  /// With folds > 0, trains on every fold but `fold`.
  std::size_t folds = 0;
  std::size_t fold = 0;
};

/// Trains one model; the checkpoint directory also receives train_report.jsonl.
std::filesystem::path cmd_train(const TrainArgs& args, std::ostream& log);

struct EvaluateArgs {
  std::optional<std::filesystem::path> config;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path data;
  std::size_t folds = 0;
  std::optional<std::vector<int>> thresholds;  // config value, else {2, 3}
  std::optional<std::filesystem::path> out;    // default report.json next to the first checkpoint
  std::optional<std::uint64_t> seed;
};

std::filesystem::path cmd_evaluate(const EvaluateArgs& args, std::ostream& log);

struct PipelineArgs {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;  // replaces output_root
  bool resume = false;
};

/// generate, teacher, baseline, AU-query student, distilled student, then one
/// evaluation per model and a comparison report at <output_root>/report.json.
std::filesystem::path cmd_pipeline(const PipelineArgs& args, std::ostream& log);

/// Thresholds from "2,3"; throws ConfigError.
std::vector<int> parse_thresholds(const std::string& text);

}  // namespace painforge
