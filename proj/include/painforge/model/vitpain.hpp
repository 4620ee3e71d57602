#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "painforge/tensor/ops.hpp"
#include "painforge/tensor/tensor.hpp"

namespace painforge {

struct ModelConfig {
  std::size_t image_size = 64;
  std::size_t patch_size = 16;
  std::size_t in_channels = 3;  // 1 for heatmaps, 3 for RGB
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t num_classes = 17;
  std::size_t num_aus = 6;
  double dropout_p = 0.1;
  /// Without AU queries the AU head reads the CLS feature for every AU.
  bool au_queries = true;

  /// Throws ConfigError when sizes do not divide or are zero.
  void validate() const;
  std::size_t num_patches() const;
  std::size_t patch_dim() const { return patch_size * patch_size * in_channels; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EncoderLayer {
  Tensor ln1_gamma, ln1_beta;
  Tensor qkv_weight, qkv_bias;  // [D,3D], [3D]
  Tensor proj_weight, proj_bias;
  Tensor ln2_gamma, ln2_beta;
  Tensor fc1_weight, fc1_bias;  // [D, ratio*D]
  Tensor fc2_weight, fc2_bias;
};

struct ModelParams {
  /// Per-pixel input standardization, fixed from training data (not trained).
  Tensor input_mean, input_scale;   // [H, W, C]
  Tensor patch_weight, patch_bias;  // [C*p*p, D], [D]
  Tensor pos_embed;                 // [N+1, D]
  Tensor cls_token;                 // [D]
  std::vector<EncoderLayer> layers;
  Tensor au_queries;                // [6, D], undefined when disabled
  Tensor au_fc1_weight, au_fc1_bias;  // [6, D, D], [6, D]
  Tensor au_fc2_weight, au_fc2_bias;  // [6, D, 1], [6]
  Tensor head_ln_gamma, head_ln_beta;
  Tensor head_fc1_weight, head_fc1_bias;  // D -> D/2
  Tensor head_fc2_weight, head_fc2_bias;  // D/2 -> D/4
  Tensor head_fc3_weight, head_fc3_bias;  // D/4 -> classes

  /// Stable (name, tensor) listing used by checkpoints and optimizers.
  std::vector<std::pair<std::string, Tensor>> named() const;
  /// Patch projection, positional embedding, CLS token and encoder layers.
  std::vector<Tensor> backbone() const;
  /// AU queries, AU head and PSPI head.
  std::vector<Tensor> heads() const;
  std::size_t count() const;
  ModelParams clone() const;
};

/// Truncated-normal (std 0.02) weights, zero biases, unit norm gains and an
/// identity input standardization.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct ModelOutput {
  Tensor pspi_logits;      // [B, classes]
  Tensor au_pred;          // [B, 6], non-negative
  Tensor cls_feature;      // [B, D]
  Tensor patch_features;   // [B, N, D]
  Tensor attention_maps;   // [B, 6, N]; undefined without AU queries
};

/// Dropout masks for one forward pass; `step` should change every update.
struct ForwardContext {
  bool training = false;
  std::uint64_t run_seed = 0;
  std::uint64_t step = 0;
};

/// [B,H,W,C] image to [B,N,D] patch tokens with positional embeddings added.
Tensor patch_embed(const Tensor& images, const ModelConfig& config, const ModelParams& params);

/// Pre-norm transformer blocks over [B, N+1, D]. NaNs raise NumericError
/// naming the layer.
Tensor encoder_forward(const Tensor& tokens, const ModelConfig& config, const ModelParams& params);

/// A = Q P^T / sqrt(D); alpha = softmax over patches; F = alpha P.
std::pair<Tensor, Tensor> au_cross_attention(const Tensor& patches, const Tensor& queries);

/// Per-AU Linear -> ReLU -> Linear -> ReLU on [B,6,D]; returns [B,6].
Tensor au_head(const Tensor& features, const ModelParams& params);

Tensor pspi_head(const Tensor& cls, const ModelConfig& config, const ModelParams& params, const ForwardContext& ctx);

ModelOutput forward(const Tensor& images, const ModelConfig& config, const ModelParams& params,
                    const ForwardContext& ctx = {});

/// Writes one f64 tensor file per parameter plus index.json. `metadata_json`
/// must be a JSON object; it is stored verbatim under "metadata".
void save_checkpoint(const std::filesystem::path& dir, const ModelConfig& config, const ModelParams& params,
                     const std::string& metadata_json = "{}");

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::string metadata_json;
};

/// Throws IoError for missing files and IntegrityError for shape mismatches.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& json);

}  // namespace painforge
