#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "painforge/model/vitpain.hpp"
#include "painforge/synth/manifest.hpp"

namespace painforge {

struct BinaryMetrics {
  int threshold = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::optional<double> auroc;
  double f1_at_half = 0.0;
  /// Best F1 over cut points chosen on the evaluated labels themselves;
  /// an optimistic upper bound, not a deployable threshold.
  double best_f1_optimistic = 0.0;
  double best_f1_cut = 0.0;
};

struct MetricsBlock {
  std::size_t samples = 0;
  std::optional<double> macro_auroc;
  std::vector<std::optional<double>> per_class_auroc;
  double accuracy_exact = 0.0;
  double accuracy_pm1 = 0.0;
  double accuracy_pm2 = 0.0;
  std::vector<BinaryMetrics> binary;
};

/// Metrics from row-major class probabilities. Binary scores are the total
/// probability mass at or above each PSPI threshold.
MetricsBlock compute_metrics(std::span<const double> probs, std::size_t classes, std::span<const int> labels,
                             std::span<const int> thresholds);

struct FoldReport {
  std::size_t fold = 0;
  std::vector<int> subjects;
  std::string checkpoint_hash;
  std::string role;
  MetricsBlock metrics;
};

struct EvalReport {
  std::string manifest_hash;
  std::vector<int> thresholds;
  std::vector<FoldReport> folds;
  /// Unweighted mean over folds of every defined metric.
  MetricsBlock aggregate;
};

struct EvalPlan {
  /// 0 evaluates a single checkpoint on its recorded held-out subjects.
  std::size_t folds = 0;
  /// Seed of the fold plan; defaults to the first checkpoint's training seed.
  std::optional<std::uint64_t> seed;
};

/// Content hash over a checkpoint directory's index and parameter files.
std::string checkpoint_hash(const std::filesystem::path& dir);

/// Eval-mode inference of each checkpoint on its test subjects. With k folds,
/// checkpoint i is evaluated on fold i. Throws IntegrityError when a test
/// subject was used for training or validation, ConfigError when the
/// checkpoint resolution does not match the data.
EvalReport evaluate_model(const std::vector<std::filesystem::path>& checkpoints, const Manifest& manifest,
                          const EvalPlan& plan, std::span<const int> thresholds, std::size_t workers);

std::string report_json(const EvalReport& report);
/// One row per fold plus an aggregate row.
std::string report_csv(const EvalReport& report);

}  // namespace painforge
