#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "painforge/tensor/tensor.hpp"

namespace painforge {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// One AdamW update on a flat parameter buffer. `step` is the 1-based step
/// count used for bias correction. Decay is decoupled: theta -= lr*wd*theta,
/// then theta -= lr * mhat / (sqrt(vhat) + eps).
void adamw_update(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::uint64_t step, double lr, const AdamWHyper& hyper);

/// Moment buffers and step counter for a set of parameters split into
/// learning-rate groups (e.g. backbone vs heads).
class AdamW {
 public:
  struct Group {
    std::string name;
    std::vector<Tensor> params;
  };

  AdamW(std::vector<Group> groups, AdamWHyper hyper);

  /// Updates every group whose entry in `lrs` is present and whose `active`
  /// flag is set. Parameters with no accumulated gradient are treated as
  /// having zero gradient. Increments the step counter exactly once.
  void step(std::span<const double> lrs, std::span<const bool> active);

  void zero_grad();

  std::uint64_t steps() const { return step_; }
  const std::vector<Group>& groups() const { return groups_; }
  const AdamWHyper& hyper() const { return hyper_; }

  std::span<const double> first_moment(std::size_t group, std::size_t index) const;
  std::span<const double> second_moment(std::size_t group, std::size_t index) const;

 private:
  std::vector<Group> groups_;
  AdamWHyper hyper_;
  std::vector<std::vector<std::vector<double>>> m_;
  std::vector<std::vector<std::vector<double>>> v_;
  std::uint64_t step_ = 0;
};

/// Cosine annealing from lr_max down to floor_fraction * lr_max.
/// Epochs past total_epochs clamp to the floor.
double cosine_lr(double epoch, double total_epochs, double lr_max, double floor_fraction);

}  // namespace painforge
