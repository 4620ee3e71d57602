#include "painforge/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "painforge/core/errors.hpp"
#include "painforge/core/random.hpp"

namespace painforge {

double binary_auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("binary_auroc: scores and labels differ in length");
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw LabelError("binary_auroc: labels must be 0 or 1, got " + std::to_string(l));
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("AUROC undefined: only one class present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (doubled) midranks of positives keeps everything in integers.
  std::uint64_t rank2_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t midrank2 = i + 1 + j;  // 2 * mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] == 1) rank2_sum += midrank2;
    i = j;
  }
  const std::uint64_t pos2 = pos * (pos + 1);
  // U = R - pos(pos+1)/2 ; AUROC = U / (pos*neg)
  return static_cast<double>(rank2_sum - pos2) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

MacroAuroc macro_auroc_detail(std::span<const double> probs, std::size_t classes, std::span<const int> labels) {
  const std::size_t n = labels.size();
  if (classes == 0 || probs.size() != n * classes) throw DimensionError("macro_auroc: probs must be N x classes");
  if (n < 2) throw UndefinedMetricError("macro AUROC needs at least two samples");
  MacroAuroc out;
  out.per_class.resize(classes);
  std::vector<double> column(n);
  std::vector<int> binary(n);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      column[i] = probs[i * classes + c];
      binary[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
      pos += static_cast<std::size_t>(binary[i]);
    }
    if (pos == 0 || pos == n) continue;
    const double a = binary_auroc(column, binary);
    out.per_class[c] = a;
    total += a;
    ++used;
  }
  if (used == 0) throw UndefinedMetricError("macro AUROC undefined: no class has both positives and negatives");
  out.value = total / static_cast<double>(used);
  return out;
}

double macro_auroc(std::span<const double> probs, std::size_t classes, std::span<const int> labels) {
  return macro_auroc_detail(probs, classes, labels).value;
}

double tolerance_accuracy(std::span<const int> preds, std::span<const int> labels, int tol) {
  if (preds.size() != labels.size()) throw DimensionError("tolerance_accuracy: length mismatch");
  if (preds.empty()) throw UndefinedMetricError("accuracy undefined on empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += std::abs(preds[i] - labels[i]) <= tol;
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

std::vector<int> binarize_pspi(std::span<const int> labels, int threshold) {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] >= threshold ? 1 : 0;
  return out;
}

double f1_binary(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw DimensionError("f1_binary: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    tp += preds[i] == 1 && labels[i] == 1;
    fp += preds[i] == 1 && labels[i] == 0;
    fn += preds[i] == 0 && labels[i] == 1;
  }
  if (tp == 0) return 0.0;  // P = R = 0, or undefined
  const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * p * r / (p + r);
}

namespace {

std::vector<int> shuffled_subjects(std::span<const int> subject_ids, std::uint64_t seed) {
  const std::set<int> distinct(subject_ids.begin(), subject_ids.end());
  std::vector<int> subjects(distinct.begin(), distinct.end());
  Rng rng(derive_seed(seed, 0xf01d));
  rng.shuffle(subjects);
  return subjects;
}

}  // namespace

FoldPlan subject_kfold(std::span<const int> subject_ids, std::size_t k, std::uint64_t seed) {
  const auto subjects = shuffled_subjects(subject_ids, seed);
  if (k == 0 || k > subjects.size()) {
    throw ConfigError("cannot split " + std::to_string(subjects.size()) + " subjects into " + std::to_string(k) +
                      " folds");
  }
  FoldPlan plan;
  plan.folds.resize(k);
  const std::size_t base = subjects.size() / k, extra = subjects.size() % k;
  std::size_t at = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    plan.folds[f].assign(subjects.begin() + static_cast<std::ptrdiff_t>(at),
                         subjects.begin() + static_cast<std::ptrdiff_t>(at + len));
    std::sort(plan.folds[f].begin(), plan.folds[f].end());
    at += len;
  }
  return plan;
}

std::pair<std::vector<int>, std::vector<int>> subject_holdout(std::span<const int> subject_ids, double fraction,
                                                              std::uint64_t seed) {
  auto subjects = shuffled_subjects(subject_ids, seed);
  if (subjects.size() < 2) throw ConfigError("a holdout split needs at least two subjects");
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must be in (0, 1)");
  auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(subjects.size())));
  held = std::clamp<std::size_t>(held, 1, subjects.size() - 1);
  std::vector<int> out(subjects.begin(), subjects.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<int> kept(subjects.begin() + static_cast<std::ptrdiff_t>(held), subjects.end());
  std::sort(out.begin(), out.end());
  std::sort(kept.begin(), kept.end());
  return {kept, out};
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

}  // namespace painforge
