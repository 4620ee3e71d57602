#include "painforge/train/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "painforge/core/errors.hpp"
#include "painforge/eval/metrics.hpp"
#include "painforge/synth/au.hpp"

namespace painforge {

std::vector<double> Inference::probabilities() const {
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < count; ++i) {
    const double* z = logits.data() + i * classes;
    const double mx = *std::max_element(z, z + classes);
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += p[i * classes + c] = std::exp(z[c] - mx);
    for (std::size_t c = 0; c < classes; ++c) p[i * classes + c] /= s;
  }
  return p;
}

std::vector<int> Inference::predictions() const {
  std::vector<int> out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = static_cast<int>(argmax(std::span<const double>(logits.data() + i * classes, classes)));
  return out;
}

ModelOutput Inference::batch(std::span<const std::size_t> index) const {
  auto rows = [&](const std::vector<double>& src, std::size_t width) {
    std::vector<double> out(index.size() * width);
    for (std::size_t b = 0; b < index.size(); ++b)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(index[b] * width), width,
                  out.begin() + static_cast<std::ptrdiff_t>(b * width));
    return Tensor::from_vector({index.size(), width}, std::move(out));
  };
  ModelOutput out;
  out.pspi_logits = rows(logits, classes);
  out.au_pred = rows(au, kNumAus);
  out.cls_feature = rows(cls, hidden);
  return out;
}

Inference run_inference(const ModelConfig& config, const ModelParams& params, const SampleSet& samples,
                        bool teacher_inputs, std::size_t batch_size) {
  if (samples.resolution != config.image_size) {
    throw ConfigError("data resolution " + std::to_string(samples.resolution) + " does not match model image_size " +
                      std::to_string(config.image_size));
  }
  ModelParams frozen = params.clone();
  for (auto& [name, t] : frozen.named()) {
    Tensor handle = t;
    handle.set_requires_grad(false);
  }
  Inference inf;
  inf.count = samples.size();
  inf.classes = config.num_classes;
  inf.hidden = config.hidden_dim;
  inf.logits.reserve(inf.count * inf.classes);
  inf.au.reserve(inf.count * kNumAus);
  inf.cls.reserve(inf.count * inf.hidden);
  std::vector<std::size_t> idx(std::max<std::size_t>(batch_size, 1));
  for (std::size_t at = 0; at < inf.count; at += idx.size()) {
    const std::size_t len = std::min(idx.size(), inf.count - at);
    std::iota(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(len), at);
    const std::span<const std::size_t> part(idx.data(), len);
    const Tensor input = teacher_inputs ? samples.batch_teacher_inputs(part) : samples.batch_inputs(part);
    const ModelOutput out = forward(input, config, frozen);
    inf.logits.insert(inf.logits.end(), out.pspi_logits.data().begin(), out.pspi_logits.data().end());
    inf.au.insert(inf.au.end(), out.au_pred.data().begin(), out.au_pred.data().end());
    inf.cls.insert(inf.cls.end(), out.cls_feature.data().begin(), out.cls_feature.data().end());
  }
  return inf;
}

}  // namespace painforge
