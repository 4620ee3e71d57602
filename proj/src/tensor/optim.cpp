#include "painforge/tensor/optim.hpp"

#include <cmath>
#include <numbers>

#include "painforge/core/errors.hpp"

namespace painforge {

void adamw_update(std::span<double> theta, std::span<const double> grad, std::span<double> m, std::span<double> v,
                  std::uint64_t step, double lr, const AdamWHyper& hyper) {
  if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size()) {
    throw DimensionError("adamw: parameter of size " + std::to_string(theta.size()) + " with grad/moments of size " +
                         std::to_string(grad.size()) + "/" + std::to_string(m.size()) + "/" +
                         std::to_string(v.size()));
  }
  if (step == 0) throw ParameterError("adamw: step count starts at 1");
  if (lr < 0.0) throw ParameterError("adamw: negative learning rate");
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * hyper.weight_decay;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * grad[i];
    v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    theta[i] = theta[i] * decay - lr * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

AdamW::AdamW(std::vector<Group> groups, AdamWHyper hyper) : groups_(std::move(groups)), hyper_(hyper) {
  for (const auto& g : groups_) {
    auto& gm = m_.emplace_back();
    auto& gv = v_.emplace_back();
    for (const auto& p : g.params) {
      gm.emplace_back(p.numel(), 0.0);
      gv.emplace_back(p.numel(), 0.0);
    }
  }
}

void AdamW::step(std::span<const double> lrs, std::span<const bool> active) {
  if (lrs.size() != groups_.size() || active.size() != groups_.size()) {
    throw DimensionError("adamw: expected " + std::to_string(groups_.size()) + " learning rates");
  }
  ++step_;
  for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
    if (!active[gi]) continue;
    for (std::size_t pi = 0; pi < groups_[gi].params.size(); ++pi) {
      Tensor& p = groups_[gi].params[pi];
      std::vector<double> zeros;
      std::span<const double> g = p.grad();
      if (g.empty()) {
        zeros.assign(p.numel(), 0.0);
        g = zeros;
      }
      adamw_update(p.mutable_data(), g, m_[gi][pi], v_[gi][pi], step_, lrs[gi], hyper_);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& g : groups_)
    for (auto& p : g.params) p.zero_grad();
}

std::span<const double> AdamW::first_moment(std::size_t group, std::size_t index) const {
  return m_.at(group).at(index);
}

std::span<const double> AdamW::second_moment(std::size_t group, std::size_t index) const {
  return v_.at(group).at(index);
}

double cosine_lr(double epoch, double total_epochs, double lr_max, double floor_fraction) {
  const double lr_min = floor_fraction * lr_max;
  if (total_epochs <= 0.0 || epoch >= total_epochs) return total_epochs <= 0.0 ? lr_max : lr_min;
  if (epoch <= 0.0) return lr_max;
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * epoch / total_epochs));
}

}  // namespace painforge
