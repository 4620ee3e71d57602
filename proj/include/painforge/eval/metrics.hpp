#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace painforge {

/// Probability that a random positive outranks a random negative, ties 0.5.
/// Throws UndefinedMetricError unless both classes are present.
double binary_auroc(std::span<const double> scores, std::span<const int> labels);

struct MacroAuroc {
  double value = 0.0;
  /// One entry per class column; empty when the class is absent from labels
  /// (or present in every sample).
  std::vector<std::optional<double>> per_class;
};

/// One-vs-rest AUROC per class column of row-major probs [N x classes],
/// averaged over classes that occur in labels.
MacroAuroc macro_auroc_detail(std::span<const double> probs, std::size_t classes, std::span<const int> labels);
double macro_auroc(std::span<const double> probs, std::size_t classes, std::span<const int> labels);

/// Fraction of predictions within `tol` of the label.
double tolerance_accuracy(std::span<const int> preds, std::span<const int> labels, int tol);

std::vector<int> binarize_pspi(std::span<const int> labels, int threshold);

/// 2PR/(P+R), and 0 when P + R = 0.
double f1_binary(std::span<const int> preds, std::span<const int> labels);

struct FoldPlan {
  std::vector<std::vector<int>> folds;  // subject ids per fold, sorted
};

/// Seeded shuffle of the distinct subjects, then contiguous partition into k
/// folds whose sizes differ by at most one.
FoldPlan subject_kfold(std::span<const int> subject_ids, std::size_t k, std::uint64_t seed);

/// Seeded subject split holding out round(fraction * subjects) ids (at least
/// one, never all). Returns {kept, held_out}, each sorted.
std::pair<std::vector<int>, std::vector<int>> subject_holdout(std::span<const int> subject_ids, double fraction,
                                                              std::uint64_t seed);

/// Index of the largest value, lowest index on ties.
std::size_t argmax(std::span<const double> values);

}  // namespace painforge
