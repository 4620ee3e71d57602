#include "painforge/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include "json.hpp"
#include "painforge/core/errors.hpp"
#include "painforge/core/random.hpp"
#include "painforge/eval/metrics.hpp"
#include "painforge/synth/au.hpp"
#include "painforge/tensor/optim.hpp"
#include "painforge/train/data.hpp"
#include "painforge/train/inference.hpp"

namespace painforge {
using nlohmann::json;

const char* role_name(Role role) {
  switch (role) {
    case Role::Teacher: return "teacher";
    case Role::Student: return "student";
    case Role::Baseline: return "baseline";
  }
  return "?";
}

Role parse_role(const std::string& text) {
  if (text == "teacher") return Role::Teacher;
  if (text == "student") return Role::Student;
  if (text == "baseline") return Role::Baseline;
  throw ConfigError("unknown role '" + text + "' (expected teacher, student or baseline)");
}

void TrainConfig::validate() const {
  if (freeze_epochs > epochs) throw ConfigError("freeze_epochs exceeds epochs");
  if (!(lr_backbone > 0.0) || !(lr_heads > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(floor_fraction >= 0.0 && floor_fraction <= 1.0)) throw ConfigError("floor_fraction must be in [0, 1]");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must be in [0, 1)");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in [0, 1)");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in [0, 1)");
  if (folds > 0 && fold >= folds) throw ConfigError("fold index must be below the fold count");
}

SubjectSplit split_subjects(const std::vector<int>& subjects, const TrainConfig& config) {
  SubjectSplit split;
  std::vector<int> rest;
  if (config.folds > 0) {
    const auto plan = subject_kfold(subjects, config.folds, config.seed);
    split.test = plan.folds[config.fold];
    const std::set<int> test(split.test.begin(), split.test.end());
    for (int s : std::set<int>(subjects.begin(), subjects.end()))
      if (!test.count(s)) rest.push_back(s);
  } else if (config.test_fraction > 0.0) {
    std::tie(rest, split.test) = subject_holdout(subjects, config.test_fraction, config.seed);
  } else {
    const std::set<int> all(subjects.begin(), subjects.end());
    rest.assign(all.begin(), all.end());
  }
  if (config.val_fraction > 0.0 && rest.size() >= 2) {
    std::tie(split.train, split.val) = subject_holdout(rest, config.val_fraction, derive_seed(config.seed, 0x7a1));
  } else {
    split.train = rest;
  }
  if (split.train.empty()) throw ConfigError("no subjects left for training");
  return split;
}

ModelConfig role_model_config(ModelConfig base, Role role) {
  base.in_channels = role == Role::Teacher ? 1 : 3;
  base.au_queries = role != Role::Baseline;
  return base;
}

std::string epoch_record_json(const EpochRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["loss"] = {{"pspi", r.terms.pspi},
               {"au", r.terms.au},
               {"pspi_distill", r.terms.pspi_distill},
               {"au_distill", r.terms.au_distill},
               {"feature_distill", r.terms.feature_distill},
               {"total", r.total}};
  j["lr_backbone"] = r.lr_backbone;
  j["lr_heads"] = r.lr_heads;
  j["backbone_frozen"] = r.backbone_frozen;
  j["val_macro_auroc"] = r.val_macro_auroc ? json(*r.val_macro_auroc) : json(nullptr);
  j["wall_seconds"] = r.wall_seconds;
  return j.dump();
}

namespace {

constexpr double kMinInputStd = 0.02;

// Per-pixel mean and inverse std of the training inputs.
void fit_input_standardization(ModelParams& params, const SampleSet& train) {
  const std::size_t per = train.pixels_per_sample(), n = train.size();
  std::vector<double> mean(per, 0.0), var(per, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < per; ++k) mean[k] += train.inputs[i * per + k];
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < per; ++k) {
      const double d = train.inputs[i * per + k] - mean[k];
      var[k] += d * d;
    }
  auto m = params.input_mean.mutable_data();
  auto s = params.input_scale.mutable_data();
  for (std::size_t k = 0; k < per; ++k) {
    m[k] = mean[k];
    s[k] = 1.0 / std::max(std::sqrt(var[k] / static_cast<double>(n)), kMinInputStd);
  }
}

std::optional<double> validation_auroc(const ModelConfig& config, const ModelParams& params, const SampleSet& val) {
  if (val.size() < 2) return std::nullopt;
  const auto inf = run_inference(config, params, val, false, 64);
  try {
    return macro_auroc(inf.probabilities(), config.num_classes, val.pspi);
  } catch (const UndefinedMetricError&) {
    return std::nullopt;
  }
}

std::string checkpoint_metadata(const TrainOptions& o, Role role, const SubjectSplit& split,
                                std::optional<std::size_t> best_epoch, std::optional<double> best_val) {
  json meta = json::parse(o.metadata_json, nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) throw ConfigError("checkpoint metadata must be a JSON object");
  meta["role"] = role_name(role);
  meta["seed"] = o.train.seed;
  meta["train_subjects"] = split.train;
  meta["val_subjects"] = split.val;
  meta["test_subjects"] = split.test;
  meta["best_epoch"] = best_epoch ? json(*best_epoch) : json(nullptr);
  meta["best_val_macro_auroc"] = best_val ? json(*best_val) : json(nullptr);
  return meta.dump();
}

TrainResult run_training(const Manifest& manifest, const Checkpoint* teacher, Role role, const TrainOptions& o) {
  o.train.validate();
  o.weights.validate();
  // The baseline is a plain classifier: no AU supervision reaches it.
  LossWeights weights = o.weights;
  if (role == Role::Baseline) weights.au = 0.0;
  const ModelConfig config = role_model_config(o.model, role);
  config.validate();
  if (teacher) {
    if (role == Role::Teacher) throw ConfigError("a teacher cannot itself be distilled");
    if (teacher->config.hidden_dim != config.hidden_dim) {
      throw ConfigError("teacher hidden_dim " + std::to_string(teacher->config.hidden_dim) +
                        " differs from student hidden_dim " + std::to_string(config.hidden_dim));
    }
    if (teacher->config.in_channels != 1) throw ConfigError("teacher checkpoint is not a heatmap model");
  }

  TrainResult result;
  result.config = config;
  result.split = split_subjects(manifest_subjects(manifest), o.train);
  const Modality modality = role == Role::Teacher ? Modality::Heatmap : Modality::Rgb;
  const std::set<int> train_ids(result.split.train.begin(), result.split.train.end());
  const SampleSet train = load_samples(manifest, modality, train_ids, teacher != nullptr, o.workers);
  if (train.resolution != config.image_size) {
    throw ConfigError("data resolution " + std::to_string(train.resolution) + " does not match model image_size " +
                      std::to_string(config.image_size));
  }
  SampleSet val;
  if (!result.split.val.empty()) {
    val = load_samples(manifest, modality, std::set<int>(result.split.val.begin(), result.split.val.end()), false,
                       o.workers);
  }

  // Teacher signals are computed once, in eval mode, and never differentiated.
  Inference teacher_out;
  if (teacher) {
    teacher_out = run_inference(teacher->config, teacher->params, train, true, 64);
    if (teacher->config.image_size != config.image_size) throw ConfigError("teacher image_size differs from student");
  }

  ModelParams params = init_params(config, o.train.seed);
  fit_input_standardization(params, train);
  const auto backbone = params.backbone();
  AdamW opt({{"backbone", backbone}, {"heads", params.heads()}},
            {o.train.beta1, o.train.beta2, 1e-8, o.train.weight_decay});

  auto save = [&](const ModelParams& p) {
    if (o.checkpoint_dir.empty()) return;
    save_checkpoint(o.checkpoint_dir, config, p,
                    checkpoint_metadata(o, role, result.split, result.best_epoch, result.best_val_macro_auroc));
  };

  const std::size_t N = train.size(), E = o.train.epochs;
  for (std::size_t epoch = 0; epoch < E; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.backbone_frozen = epoch < o.train.freeze_epochs;
    rec.lr_backbone = cosine_lr(static_cast<double>(epoch), static_cast<double>(E), o.train.lr_backbone,
                                o.train.floor_fraction);
    rec.lr_heads =
        cosine_lr(static_cast<double>(epoch), static_cast<double>(E), o.train.lr_heads, o.train.floor_fraction);
    for (const auto& t : backbone) {
      Tensor handle = t;
      handle.set_requires_grad(!rec.backbone_frozen);
    }
    const std::vector<double> lrs{rec.lr_backbone, rec.lr_heads};
    const bool active[2] = {!rec.backbone_frozen, true};

    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(o.train.seed, 0xba7c, epoch));
    shuffle_rng.shuffle(order);

    LossTerms sums;
    double total_sum = 0.0;
    for (std::size_t at = 0; at < N; at += o.train.batch_size) {
      const std::size_t len = std::min(o.train.batch_size, N - at);
      const std::span<const std::size_t> idx(order.data() + at, len);
      const ForwardContext ctx{true, o.train.seed, opt.steps()};
      const ModelOutput out = forward(train.batch_inputs(idx), config, params, ctx);
      const auto labels = train.batch_pspi(idx);
      ModelOutput t_out;
      if (teacher) t_out = teacher_out.batch(idx);
      const auto loss = compose_loss(out, teacher ? &t_out : nullptr, labels, train.batch_au(idx), weights);
      opt.zero_grad();
      loss.total.backward();
      opt.step(lrs, std::span<const bool>(active, 2));

      const double w = static_cast<double>(len);
      sums.pspi += w * loss.terms.pspi;
      sums.au += w * loss.terms.au;
      sums.pspi_distill += w * loss.terms.pspi_distill;
      sums.au_distill += w * loss.terms.au_distill;
      sums.feature_distill += w * loss.terms.feature_distill;
      total_sum += w * loss.total.item();
    }
    const double n = static_cast<double>(N);
    rec.terms = {sums.pspi / n, sums.au / n, sums.pspi_distill / n, sums.au_distill / n, sums.feature_distill / n};
    rec.total = total_sum / n;

    rec.val_macro_auroc = validation_auroc(config, params, val);
    if (rec.val_macro_auroc && (!result.best_val_macro_auroc || *rec.val_macro_auroc > *result.best_val_macro_auroc)) {
      result.best_val_macro_auroc = rec.val_macro_auroc;
      result.best_epoch = epoch;
      result.params = params.clone();
      save(result.params);
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.epochs.push_back(rec);
    if (o.on_epoch) o.on_epoch(rec);
  }
  for (const auto& t : backbone) {
    Tensor handle = t;
    handle.set_requires_grad(true);
  }
  if (!result.best_epoch) {
    // no usable validation metric: keep the final parameters
    result.params = params.clone();
    save(result.params);
  }
  return result;
}

}  // namespace

TrainResult train_teacher(const Manifest& manifest, const TrainOptions& options) {
  return run_training(manifest, nullptr, Role::Teacher, options);
}

TrainResult train_student(const Manifest& manifest, const Checkpoint* teacher, Role role,
                          const TrainOptions& options) {
  if (role == Role::Teacher) throw ConfigError("train_student called with the teacher role");
  if (role == Role::Baseline && teacher) throw ConfigError("the baseline role does not take a teacher");
  return run_training(manifest, teacher, role, options);
}

}  // namespace painforge
