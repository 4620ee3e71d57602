#pragma once

#include <span>
#include <vector>

#include "painforge/model/vitpain.hpp"
#include "painforge/train/data.hpp"

namespace painforge {

/// Eval-mode outputs for a whole sample set, row-major.
struct Inference {
  std::size_t count = 0;
  std::size_t classes = 0;
  std::size_t hidden = 0;
  std::vector<double> logits;  // [count, classes]
  std::vector<double> au;      // [count, 6]
  std::vector<double> cls;     // [count, hidden]

  /// Row-wise softmax of the logits.
  std::vector<double> probabilities() const;
  /// argmax of each row, lowest index on ties.
  std::vector<int> predictions() const;
  /// Constant tensors for the given rows, shaped like a ModelOutput.
  ModelOutput batch(std::span<const std::size_t> index) const;
};

/// Runs the model over every sample without building a gradient tape. With
/// `teacher_inputs`, feeds the paired heatmaps instead of the primary inputs.
Inference run_inference(const ModelConfig& config, const ModelParams& params, const SampleSet& samples,
                        bool teacher_inputs, std::size_t batch_size);

}  // namespace painforge
