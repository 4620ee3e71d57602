#pragma once

#include <functional>

#include "painforge/tensor/tensor.hpp"

namespace painforge {

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;   // components compared
  std::size_t skipped = 0;   // |analytic| + |numeric| below the floor
  bool finite = true;        // false if any comparison produced NaN/Inf
};

/// Compares reverse-mode gradients of scalar f at x against central finite
/// differences, component by component. x must be a leaf with requires_grad.
/// Components whose analytic and numeric magnitudes sum below `floor` are not
/// compared. x's values are restored on return.
GradcheckResult gradcheck(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h = 1e-6,
                          double floor = 1e-8);

}  // namespace painforge
