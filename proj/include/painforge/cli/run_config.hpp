#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "painforge/model/vitpain.hpp"
#include "painforge/synth/dataset.hpp"
#include "painforge/train/loss.hpp"
#include "painforge/train/trainer.hpp"

namespace painforge {

/// Everything one pipeline run needs. Read from a flat `key = value` file;
/// `#` starts a comment.
struct RunConfig {
  DatasetSpec dataset;
  ModelConfig model;
  TrainConfig train;
  LossWeights loss;
  std::uint64_t seed = 0;
  std::filesystem::path output_root = "runs";
  std::vector<int> thresholds{2, 3};
  /// 0 for a held-out test split, k for subject k-fold evaluation.
  std::size_t eval_folds = 0;

  /// Seed shared by every stage.
  void set_seed(std::uint64_t value);
  /// Throws ConfigError on any invalid section.
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Throws ConfigError naming the line for unknown keys, duplicates and bad values.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every key written out; parse_run_config(serialize_run_config(c)) == c.
std::string serialize_run_config(const RunConfig& config);

/// Canonical JSON (sorted keys). output_root is left out: it says where a run
/// lives, not what it computes.
std::string canonical_config_json(const RunConfig& config);
/// SHA-256 of canonical_config_json.
std::string config_hash(const RunConfig& config);

}  // namespace painforge
