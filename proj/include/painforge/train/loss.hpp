#pragma once

#include <span>

#include "painforge/model/vitpain.hpp"

namespace painforge {

struct LossWeights {
  double pspi = 1.0;
  double au = 1.0;
  double pspi_distill = 0.1;
  double au_distill = 0.3;
  double feature_distill = 0.5;
  double temperature = 4.0;

  /// Throws ConfigError for negative weights or a non-positive temperature.
  void validate() const;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Unweighted term values.
struct LossTerms {
  double pspi = 0.0;
  double au = 0.0;
  double pspi_distill = 0.0;
  double au_distill = 0.0;
  double feature_distill = 0.0;

  double weighted(const LossWeights& w) const;
};

struct ComposedLoss {
  Tensor total;
  LossTerms terms;
};

/// Supervised CE + AU MSE, plus KL/AU/CLS distillation against `teacher` when
/// given. Terms with zero weight are skipped entirely. Teacher tensors must be
/// constants (no gradient reaches them).
ComposedLoss compose_loss(const ModelOutput& student, const ModelOutput* teacher, std::span<const int> pspi_labels,
                          const Tensor& au_labels, const LossWeights& weights);

}  // namespace painforge
