#include "painforge/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "painforge/core/errors.hpp"

namespace painforge {

GradcheckResult gradcheck(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h, double floor) {
  if (!x.requires_grad()) throw ParameterError("gradcheck: x must require grad");
  x.zero_grad();
  f(x).backward();
  std::vector<double> analytic(x.numel(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  x.zero_grad();

  GradcheckResult result;
  auto values = x.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    const double up = original + h;
    const double down = original - h;
    values[i] = up;
    const double f_up = f(x).item();
    values[i] = down;
    const double f_down = f(x).item();
    values[i] = original;

    const double numeric = (f_up - f_down) / (up - down);
    const double a = analytic[i];
    if (!std::isfinite(numeric) || !std::isfinite(a)) {
      result.finite = false;
      result.max_rel_error = std::numeric_limits<double>::infinity();
      continue;
    }
    if (std::abs(a) + std::abs(numeric) < floor) {
      ++result.skipped;
      continue;
    }
    const double rel = std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
    result.max_rel_error = std::max(result.max_rel_error, rel);
    ++result.checked;
  }
  return result;
}

}  // namespace painforge
