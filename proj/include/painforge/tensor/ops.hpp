#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "painforge/tensor/tensor.hpp"

namespace painforge {

/// Matrix product over the last two axes.
///
/// Accepted forms: [m,k]x[k,n]; [...,m,k]x[k,n] (right operand shared across
/// the batch); [...,m,k]x[...,k,n] with identical leading axes.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swaps the last two axes.
Tensor transpose_last(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor reshape(const Tensor& x, Shape shape);

// Elementwise binary ops. The right operand may have a shape equal to a
// trailing suffix of the left operand's shape, in which case it is broadcast
// over the leading axes (bias vectors, positional embeddings).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

/// Repeats x along new leading axes so that the result has `shape`.
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor relu(const Tensor& x);
/// Exact GELU, x * Phi(x).
Tensor gelu(const Tensor& x);

/// Identifies one dropout site at one optimizer step. Masks are a pure
/// function of (run_seed, layer_id, step, element index).
struct DropoutKey {
  std::uint64_t run_seed = 0;
  std::uint64_t layer_id = 0;
  std::uint64_t step = 0;
};

/// Inverted dropout. Returns x itself when training is false or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, const DropoutKey& key);

/// Numerically stable softmax (max-subtracted) along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Normalizes over the last axis, then applies gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Mean over the batch of -log softmax(logits)[label]. logits is [B,C].
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// T^2 * KL(softmax(teacher/T) || softmax(student/T)), averaged over the batch.
/// Gradient flows to `student` only; the teacher is always treated as constant.
Tensor kl_temperature(const Tensor& teacher_logits, const Tensor& student_logits, double temperature);

/// Mean of squared differences.
Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace painforge
