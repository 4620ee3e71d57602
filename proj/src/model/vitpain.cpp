#include "painforge/model/vitpain.hpp"

#include <cmath>

#include "json.hpp"
#include "painforge/core/errors.hpp"
#include "painforge/core/random.hpp"
#include "painforge/tensor/tensor_io.hpp"

namespace painforge {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kInitStd = 0.02;

Tensor trunc_normal(Rng& rng, Shape shape) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.truncated_normal(kInitStd);
  return Tensor::from_vector(std::move(shape), std::move(v), true);
}

Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

Tensor self_attention(const Tensor& x, const EncoderLayer& layer, std::size_t heads) {
  const std::size_t B = x.size(0), T = x.size(1), D = x.size(2), dh = D / heads;
  const Tensor qkv = reshape(linear(x, layer.qkv_weight, layer.qkv_bias), {B, T, 3, heads, dh});
  const Tensor split = permute(qkv, {2, 0, 3, 1, 4});  // [3,B,H,T,dh]
  auto part = [&](std::size_t i) { return reshape(narrow(split, 0, i, 1), {B, heads, T, dh}); };
  const Tensor q = part(0), k = part(1), v = part(2);
  const Tensor scores = scale(matmul(q, transpose_last(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
  const Tensor ctx = matmul(softmax(scores, 3), v);  // [B,H,T,dh]
  const Tensor merged = reshape(permute(ctx, {0, 2, 1, 3}), {B, T, D});
  return linear(merged, layer.proj_weight, layer.proj_bias);
}

void check_shape(const Tensor& t, const Shape& expected, const std::string& what) {
  if (t.shape() != expected) {
    throw DimensionError(what + ": expected " + shape_str(expected) + ", got " + shape_str(t.shape()));
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (image_size == 0 || patch_size == 0 || in_channels == 0 || hidden_dim == 0 || num_heads == 0 ||
      mlp_ratio == 0 || num_classes < 2 || num_aus == 0) {
    throw ConfigError("model config sizes must be positive");
  }
  if (image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (hidden_dim % num_heads != 0) throw ConfigError("hidden_dim must be divisible by num_heads");
  if (hidden_dim % 4 != 0) throw ConfigError("hidden_dim must be divisible by 4");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must be in [0, 1)");
}

std::size_t ModelConfig::num_patches() const {
  const std::size_t g = image_size / patch_size;
  return g * g;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out{
      {"input.mean", input_mean},     {"input.scale", input_scale},
      {"patch.weight", patch_weight}, {"patch.bias", patch_bias}, {"pos_embed", pos_embed}, {"cls_token", cls_token}};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string p = "encoder." + std::to_string(i) + ".";
    out.insert(out.end(), {{p + "ln1.gamma", l.ln1_gamma},
                           {p + "ln1.beta", l.ln1_beta},
                           {p + "qkv.weight", l.qkv_weight},
                           {p + "qkv.bias", l.qkv_bias},
                           {p + "proj.weight", l.proj_weight},
                           {p + "proj.bias", l.proj_bias},
                           {p + "ln2.gamma", l.ln2_gamma},
                           {p + "ln2.beta", l.ln2_beta},
                           {p + "fc1.weight", l.fc1_weight},
                           {p + "fc1.bias", l.fc1_bias},
                           {p + "fc2.weight", l.fc2_weight},
                           {p + "fc2.bias", l.fc2_bias}});
  }
  if (au_queries.defined()) out.emplace_back("au_queries", au_queries);
  out.insert(out.end(), {{"au_head.fc1.weight", au_fc1_weight},
                         {"au_head.fc1.bias", au_fc1_bias},
                         {"au_head.fc2.weight", au_fc2_weight},
                         {"au_head.fc2.bias", au_fc2_bias},
                         {"pspi_head.ln.gamma", head_ln_gamma},
                         {"pspi_head.ln.beta", head_ln_beta},
                         {"pspi_head.fc1.weight", head_fc1_weight},
                         {"pspi_head.fc1.bias", head_fc1_bias},
                         {"pspi_head.fc2.weight", head_fc2_weight},
                         {"pspi_head.fc2.bias", head_fc2_bias},
                         {"pspi_head.fc3.weight", head_fc3_weight},
                         {"pspi_head.fc3.bias", head_fc3_bias}});
  return out;
}

std::vector<Tensor> ModelParams::backbone() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named())
    if (name.starts_with("patch.") || name == "pos_embed" || name == "cls_token" || name.starts_with("encoder."))
      out.push_back(t);
  return out;
}

std::vector<Tensor> ModelParams::heads() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named())
    if (name.starts_with("au_") || name.starts_with("pspi_head.")) out.push_back(t);
  return out;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t.numel();
  return n;
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  auto dup = [](Tensor& t) {
    if (!t.defined()) return;
    Tensor d = t.detach();
    d.set_requires_grad(true);
    t = d;
  };
  copy.input_mean = input_mean.detach();
  copy.input_scale = input_scale.detach();
  dup(copy.patch_weight);
  dup(copy.patch_bias);
  dup(copy.pos_embed);
  dup(copy.cls_token);
  for (auto& l : copy.layers) {
    for (Tensor* t : {&l.ln1_gamma, &l.ln1_beta, &l.qkv_weight, &l.qkv_bias, &l.proj_weight, &l.proj_bias,
                      &l.ln2_gamma, &l.ln2_beta, &l.fc1_weight, &l.fc1_bias, &l.fc2_weight, &l.fc2_bias})
      dup(*t);
  }
  for (Tensor* t : {&copy.au_queries, &copy.au_fc1_weight, &copy.au_fc1_bias, &copy.au_fc2_weight,
                    &copy.au_fc2_bias, &copy.head_ln_gamma, &copy.head_ln_beta, &copy.head_fc1_weight,
                    &copy.head_fc1_bias, &copy.head_fc2_weight, &copy.head_fc2_bias, &copy.head_fc3_weight,
                    &copy.head_fc3_bias})
    dup(*t);
  return copy;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, 0x1417));
  const std::size_t D = config.hidden_dim, N = config.num_patches(), A = config.num_aus;
  const std::size_t hidden = config.mlp_ratio * D;
  ModelParams p;
  p.input_mean = Tensor::zeros({config.image_size, config.image_size, config.in_channels});
  p.input_scale = Tensor::full({config.image_size, config.image_size, config.in_channels}, 1.0);
  p.patch_weight = trunc_normal(rng, {config.patch_dim(), D});
  p.patch_bias = zeros({D});
  p.pos_embed = trunc_normal(rng, {N + 1, D});
  p.cls_token = trunc_normal(rng, {D});
  for (std::size_t i = 0; i < config.num_layers; ++i) {
    EncoderLayer l;
    l.ln1_gamma = ones({D});
    l.ln1_beta = zeros({D});
    l.qkv_weight = trunc_normal(rng, {D, 3 * D});
    l.qkv_bias = zeros({3 * D});
    l.proj_weight = trunc_normal(rng, {D, D});
    l.proj_bias = zeros({D});
    l.ln2_gamma = ones({D});
    l.ln2_beta = zeros({D});
    l.fc1_weight = trunc_normal(rng, {D, hidden});
    l.fc1_bias = zeros({hidden});
    l.fc2_weight = trunc_normal(rng, {hidden, D});
    l.fc2_bias = zeros({D});
    p.layers.push_back(std::move(l));
  }
  if (config.au_queries) p.au_queries = trunc_normal(rng, {A, D});
  p.au_fc1_weight = trunc_normal(rng, {A, D, D});
  p.au_fc1_bias = zeros({A, D});
  p.au_fc2_weight = trunc_normal(rng, {A, D, 1});
  p.au_fc2_bias = zeros({A});
  p.head_ln_gamma = ones({D});
  p.head_ln_beta = zeros({D});
  p.head_fc1_weight = trunc_normal(rng, {D, D / 2});
  p.head_fc1_bias = zeros({D / 2});
  p.head_fc2_weight = trunc_normal(rng, {D / 2, D / 4});
  p.head_fc2_bias = zeros({D / 4});
  p.head_fc3_weight = trunc_normal(rng, {D / 4, config.num_classes});
  p.head_fc3_bias = zeros({config.num_classes});
  return p;
}

Tensor patch_embed(const Tensor& images, const ModelConfig& config, const ModelParams& params) {
  if (images.rank() != 4) throw DimensionError("images must be [B,H,W,C], got " + shape_str(images.shape()));
  const std::size_t B = images.size(0), H = images.size(1), W = images.size(2), C = images.size(3);
  const std::size_t p = config.patch_size;
  if (H % p != 0 || W % p != 0) {
    throw DimensionError("image " + std::to_string(H) + "x" + std::to_string(W) + " not divisible by patch size " +
                         std::to_string(p));
  }
  if (C != config.in_channels) {
    throw DimensionError("expected " + std::to_string(config.in_channels) + " channels, got " + std::to_string(C));
  }
  const std::size_t gh = H / p, gw = W / p, N = gh * gw;
  if (params.pos_embed.size(0) != N + 1) {
    throw DimensionError("positional embedding covers " + std::to_string(params.pos_embed.size(0) - 1) +
                         " patches, image has " + std::to_string(N));
  }
  const Tensor grid = permute(reshape(images, {B, gh, p, gw, p, C}), {0, 1, 3, 2, 4, 5});
  const Tensor flat = reshape(grid, {B, N, p * p * C});
  const Tensor tokens = linear(flat, params.patch_weight, params.patch_bias);
  return add(tokens, narrow(params.pos_embed, 0, 1, N));
}

Tensor encoder_forward(const Tensor& tokens, const ModelConfig& config, const ModelParams& params) {
  if (tokens.rank() != 3 || tokens.size(2) != config.hidden_dim) {
    throw DimensionError("encoder tokens must be [B,T," + std::to_string(config.hidden_dim) + "], got " +
                         shape_str(tokens.shape()));
  }
  Tensor x = tokens;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    try {
      x = add(x, self_attention(layer_norm(x, l.ln1_gamma, l.ln1_beta), l, config.num_heads));
      const Tensor h = gelu(linear(layer_norm(x, l.ln2_gamma, l.ln2_beta), l.fc1_weight, l.fc1_bias));
      x = add(x, linear(h, l.fc2_weight, l.fc2_bias));
    } catch (const NumericError& e) {
      throw NumericError("encoder layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return x;
}

std::pair<Tensor, Tensor> au_cross_attention(const Tensor& patches, const Tensor& queries) {
  if (patches.rank() != 3 || queries.rank() != 2 || patches.size(2) != queries.size(1)) {
    throw DimensionError("cross-attention expects P [B,N,D] and Q [A,D], got " + shape_str(patches.shape()) +
                         " and " + shape_str(queries.shape()));
  }
  const double d = static_cast<double>(queries.size(1));
  const std::size_t B = patches.size(0), A = queries.size(0), D = queries.size(1);
  const Tensor q = broadcast_to(queries, {B, A, D});
  const Tensor logits = scale(matmul(q, transpose_last(patches)), 1.0 / std::sqrt(d));  // [B,A,N]
  const Tensor alpha = softmax(logits, 2);
  return {matmul(alpha, patches), alpha};
}

Tensor au_head(const Tensor& features, const ModelParams& params) {
  const std::size_t A = params.au_fc1_weight.size(0), D = params.au_fc1_weight.size(1);
  if (features.rank() != 3 || features.size(1) != A || features.size(2) != D) {
    throw DimensionError("AU head expects [B," + std::to_string(A) + "," + std::to_string(D) + "], got " +
                         shape_str(features.shape()));
  }
  const std::size_t B = features.size(0);
  const Tensor per_au = permute(features, {1, 0, 2});                      // [A,B,D]
  Tensor h = permute(matmul(per_au, params.au_fc1_weight), {1, 0, 2});     // [B,A,H]
  h = relu(add(h, params.au_fc1_bias));
  const Tensor out = matmul(permute(h, {1, 0, 2}), params.au_fc2_weight);  // [A,B,1]
  return relu(add(reshape(permute(out, {1, 0, 2}), {B, A}), params.au_fc2_bias));
}

Tensor pspi_head(const Tensor& cls, const ModelConfig& config, const ModelParams& params, const ForwardContext& ctx) {
  check_shape(cls, {cls.size(0), config.hidden_dim}, "PSPI head input");
  const double p = config.dropout_p;
  Tensor h = layer_norm(cls, params.head_ln_gamma, params.head_ln_beta);
  h = gelu(linear(h, params.head_fc1_weight, params.head_fc1_bias));
  h = dropout(h, p, ctx.training, {ctx.run_seed, 1, ctx.step});
  h = gelu(linear(h, params.head_fc2_weight, params.head_fc2_bias));
  h = dropout(h, p, ctx.training, {ctx.run_seed, 2, ctx.step});
  return linear(h, params.head_fc3_weight, params.head_fc3_bias);
}

ModelOutput forward(const Tensor& images, const ModelConfig& config, const ModelParams& params,
                    const ForwardContext& ctx) {
  if (images.rank() != 4 || images.size(1) != config.image_size || images.size(2) != config.image_size) {
    throw DimensionError("model expects [B," + std::to_string(config.image_size) + "," +
                         std::to_string(config.image_size) + ",C] images, got " + shape_str(images.shape()));
  }
  const std::size_t B = images.size(0), D = config.hidden_dim, N = config.num_patches();
  const Tensor standardized = mul(sub(images, params.input_mean), params.input_scale);
  const Tensor patches = patch_embed(standardized, config, params);
  const Tensor cls = broadcast_to(add(narrow(params.pos_embed, 0, 0, 1), params.cls_token), {B, 1, D});
  const Tensor encoded = encoder_forward(concat({cls, patches}, 1), config, params);

  ModelOutput out;
  out.cls_feature = reshape(narrow(encoded, 1, 0, 1), {B, D});
  out.patch_features = narrow(encoded, 1, 1, N);
  out.pspi_logits = pspi_head(out.cls_feature, config, params, ctx);
  Tensor au_features;
  if (config.au_queries) {
    auto [f, alpha] = au_cross_attention(out.patch_features, params.au_queries);
    au_features = f;
    out.attention_maps = alpha;
  } else {
    au_features = permute(broadcast_to(out.cls_feature, {config.num_aus, B, D}), {1, 0, 2});
  }
  out.au_pred = au_head(au_features, params);
  return out;
}

std::string config_to_json(const ModelConfig& c) {
  return json{{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"in_channels", c.in_channels},
              {"hidden_dim", c.hidden_dim}, {"num_layers", c.num_layers}, {"num_heads", c.num_heads},
              {"mlp_ratio", c.mlp_ratio},   {"num_classes", c.num_classes}, {"num_aus", c.num_aus},
              {"dropout_p", c.dropout_p},   {"au_queries", c.au_queries}}
      .dump();
}

ModelConfig config_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    ModelConfig c;
    c.image_size = j.at("image_size").get<std::size_t>();
    c.patch_size = j.at("patch_size").get<std::size_t>();
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.num_aus = j.at("num_aus").get<std::size_t>();
    c.dropout_p = j.at("dropout_p").get<double>();
    c.au_queries = j.at("au_queries").get<bool>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

void save_checkpoint(const fs::path& dir, const ModelConfig& config, const ModelParams& params,
                     const std::string& metadata_json) {
  json meta = json::parse(metadata_json, nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) throw ParameterError("checkpoint metadata must be a JSON object");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  json index;
  index["format"] = "painforge-checkpoint";
  index["version"] = 1;
  index["config"] = json::parse(config_to_json(config));
  index["metadata"] = meta;
  json entries = json::object();
  for (const auto& [name, t] : params.named()) {
    const std::string file = name + ".p3dt";
    write_tensor_file(dir / file, t.shape(), t.data(), DType::F64);
    entries[name] = {{"file", file}, {"shape", t.shape()}, {"dtype", "f64"}};
  }
  index["params"] = entries;
  write_file_atomic(dir / "index.json", index.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path index_path = dir / "index.json";
  if (!fs::exists(index_path)) throw IoError("no checkpoint index at " + index_path.string());
  const json index = json::parse(read_file(index_path), nullptr, false);
  if (index.is_discarded() || !index.contains("config") || !index.contains("params")) {
    throw IntegrityError("malformed checkpoint index " + index_path.string());
  }
  Checkpoint ck;
  ck.config = config_from_json(index["config"].dump());
  ck.metadata_json = index.value("metadata", json::object()).dump();
  ck.params = init_params(ck.config, 0);
  const auto& entries = index["params"];
  for (auto& [name, t] : ck.params.named()) {
    if (!entries.contains(name)) throw IntegrityError("checkpoint lacks parameter " + name);
    const auto blob = read_tensor_file(dir / entries[name].at("file").get<std::string>());
    if (blob.shape != t.shape()) {
      throw IntegrityError("parameter " + name + " has shape " + shape_str(blob.shape) + ", config implies " +
                           shape_str(t.shape()));
    }
    std::copy(blob.values.begin(), blob.values.end(), t.mutable_data().begin());
  }
  if (entries.size() != ck.params.named().size()) throw IntegrityError("checkpoint has unexpected parameters");
  return ck;
}

}  // namespace painforge
