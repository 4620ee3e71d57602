#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "painforge/model/vitpain.hpp"
#include "painforge/synth/manifest.hpp"
#include "painforge/train/loss.hpp"

namespace painforge {

enum class Role { Teacher, Student, Baseline };

const char* role_name(Role role);
Role parse_role(const std::string& text);

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t freeze_epochs = 5;
  double lr_backbone = 5e-6;
  double lr_heads = 5e-5;
  double floor_fraction = 0.01;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  /// Fraction of subjects held out for testing (ignored when folds > 0).
  double test_fraction = 0.2;
  /// Fraction of the remaining subjects used for model selection.
  double val_fraction = 0.2;
  /// With folds > 0, fold `fold` of the seeded k-fold plan is the test set.
  std::size_t folds = 0;
  std::size_t fold = 0;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct SubjectSplit {
  std::vector<int> train, val, test;
};

/// Deterministic identity-disjoint split for `config.seed`.
SubjectSplit split_subjects(const std::vector<int>& subjects, const TrainConfig& config);

/// Model configuration for a role: heatmap input for the teacher, no AU
/// queries for the baseline.
ModelConfig role_model_config(ModelConfig base, Role role);

struct EpochRecord {
  std::size_t epoch = 0;
  LossTerms terms;  // sample-weighted means over the epoch
  double total = 0.0;
  double lr_backbone = 0.0;
  double lr_heads = 0.0;
  bool backbone_frozen = false;
  std::optional<double> val_macro_auroc;
  double wall_seconds = 0.0;
};

struct TrainOptions {
  ModelConfig model;
  TrainConfig train;
  LossWeights weights;
  /// Checkpoint directory; written at every validation improvement.
  std::filesystem::path checkpoint_dir;
  /// Extra key/values merged into checkpoint metadata (a JSON object).
  std::string metadata_json = "{}";
  std::size_t workers = 1;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  ModelConfig config;
  ModelParams params;  // the selected (best-validation) parameters
  SubjectSplit split;
  std::vector<EpochRecord> epochs;
  std::optional<std::size_t> best_epoch;
  std::optional<double> best_val_macro_auroc;
};

/// Supervised training on heatmaps.
TrainResult train_teacher(const Manifest& manifest, const TrainOptions& options);

/// Training on RGB frames, distilled from `teacher` when given. Without a
/// teacher this is plain supervised training. The baseline role has no AU
/// queries and ignores the AU regression weight.
TrainResult train_student(const Manifest& manifest, const Checkpoint* teacher, Role role, const TrainOptions& options);

/// One JSON line per epoch record.
std::string epoch_record_json(const EpochRecord& record);

}  // namespace painforge
