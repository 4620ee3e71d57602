#include <cmath>
#include <set>

#include "doctest.h"
#include "painforge/core/errors.hpp"
#include "painforge/synth/dataset.hpp"
#include "painforge/tensor/optim.hpp"
#include "painforge/tensor/tensor_io.hpp"
#include "painforge/train/data.hpp"
#include "painforge/train/loss.hpp"
#include "painforge/train/trainer.hpp"
#include "support.hpp"

using namespace painforge;
namespace fs = std::filesystem;
using painforge::testing::random_tensor;
using painforge::testing::ScratchDir;
using painforge::testing::to_vector;

namespace {

constexpr std::size_t kClasses = 17;

// T^2 KL(softmax(t/T) || softmax(s/T)) for one row, written out directly.
double scalar_kl(const std::vector<double>& t, const std::vector<double>& s, double T) {
  auto soft = [&](const std::vector<double>& z) {
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    std::vector<double> p(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) sum += p[i] = std::exp((z[i] - m) / T);
    for (auto& v : p) v /= sum;
    return p;
  };
  const auto p = soft(t), q = soft(s);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
  return T * T * kl;
}

ModelOutput outputs(Tensor logits, Tensor au, Tensor cls) {
  ModelOutput o;
  o.pspi_logits = std::move(logits);
  o.au_pred = std::move(au);
  o.cls_feature = std::move(cls);
  return o;
}

struct ToyData {
  ScratchDir dir{"train"};
  Manifest manifest;
  ToyData() {
    DatasetSpec spec;
    spec.identities = 8;
    spec.expressions_per_identity = 2;
    spec.yaws = {0.0};
    spec.resolution = 32;
    spec.seed = 12;
    manifest = read_manifest(build_dataset(spec, dir.path() / "data", false, 1).manifest_path);
  }
};

const ToyData& toy() {
  static ToyData data;
  return data;
}

TrainOptions tiny_options(std::size_t epochs) {
  TrainOptions o;
  o.model.image_size = 32;
  o.model.hidden_dim = 16;
  o.model.num_layers = 1;
  o.model.num_heads = 2;
  o.train.epochs = epochs;
  o.train.freeze_epochs = std::min<std::size_t>(1, epochs);
  o.train.lr_heads = 1e-3;
  o.train.lr_backbone = 1e-4;
  o.train.batch_size = 8;
  o.train.seed = 3;
  return o;
}

std::vector<std::vector<double>> param_values(const ModelParams& p) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, t] : p.named())
    if (t.defined()) out.push_back(to_vector(t));
  return out;
}

}  // namespace

TEST_CASE("compose_loss hand example") {
  const double T = 4.0;
  const std::vector<int> labels{0};
  // CE = log(1 + 16 e^c) = 2 with the true class at logit 0
  const double c = std::log((std::exp(2.0) - 1.0) / 16.0);
  std::vector<double> s_logits(kClasses, c);
  s_logits[0] = 0.0;
  // bisect the teacher's first logit until T^2 KL = 0.1
  double lo = 0.0, hi = 50.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    auto t = s_logits;
    t[0] += mid;
    (scalar_kl(t, s_logits, T) < 0.1 ? lo : hi) = mid;
  }
  auto t_logits = s_logits;
  t_logits[0] += 0.5 * (lo + hi);

  const Tensor au_labels = Tensor::full({1, 6}, std::sqrt(0.5));
  const auto student = outputs(Tensor::from_vector({1, kClasses}, s_logits, true), Tensor::zeros({1, 6}, true),
                               Tensor::zeros({1, 4}, true));
  const auto teacher = outputs(Tensor::from_vector({1, kClasses}, t_logits), Tensor::full({1, 6}, std::sqrt(0.2)),
                               Tensor::full({1, 4}, std::sqrt(0.4)));
  const LossWeights w;
  const auto loss = compose_loss(student, &teacher, labels, au_labels, w);
  CHECK(loss.terms.pspi == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(loss.terms.au == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(loss.terms.pspi_distill == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(loss.terms.au_distill == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(loss.terms.feature_distill == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(std::abs(loss.total.item() - 2.77) < 1e-6);
}

TEST_CASE("compose_loss: perfect predictions, identical teacher, errors") {
  std::vector<double> logits(2 * kClasses, 0.0);
  logits[0 * kClasses + 3] = 60.0;
  logits[1 * kClasses + 9] = 60.0;
  const Tensor au = Tensor::from_vector({2, 6}, {1, 2, 3, 4, 5, 1, 0, 0, 0, 0, 0, 0});
  const auto student = outputs(Tensor::from_vector({2, kClasses}, logits, true), au, Tensor::full({2, 4}, 0.3));
  const std::vector<int> labels{3, 9};
  CHECK(compose_loss(student, nullptr, labels, au, {}).total.item() < 1e-12);

  const auto same = outputs(Tensor::from_vector({2, kClasses}, logits), au, Tensor::full({2, 4}, 0.3));
  const auto loss = compose_loss(student, &same, labels, au, {});
  CHECK(loss.terms.pspi_distill == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(loss.terms.au_distill == 0.0);
  CHECK(loss.terms.feature_distill == 0.0);

  CHECK_THROWS_AS(compose_loss(student, nullptr, std::vector<int>{1}, au, {}), DimensionError);
  CHECK_THROWS_AS(compose_loss(student, nullptr, labels, Tensor::zeros({2, 5}), {}), DimensionError);
  const auto wide = outputs(same.pspi_logits, au, Tensor::zeros({2, 8}));
  CHECK_THROWS_AS(compose_loss(student, &wide, labels, au, {}), ConfigError);
}

TEST_CASE("compose_loss total is the weighted sum of its terms") {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t B = 1 + rng.below(4);
    std::vector<int> labels(B);
    for (auto& l : labels) l = static_cast<int>(rng.below(kClasses));
    const auto s = outputs(random_tensor(rng, {B, kClasses}, -3, 3), random_tensor(rng, {B, 6}, 0, 5),
                           random_tensor(rng, {B, 8}));
    const auto t = outputs(random_tensor(rng, {B, kClasses}, -3, 3, false), random_tensor(rng, {B, 6}, 0, 5, false),
                           random_tensor(rng, {B, 8}, -1, 1, false));
    LossWeights w{rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1),
                  rng.uniform(0.5, 8)};
    const auto loss = compose_loss(s, &t, labels, random_tensor(rng, {B, 6}, 0, 5, false), w);
    REQUIRE(std::abs(loss.total.item() - loss.terms.weighted(w)) < 1e-6);
    const auto t0 = to_vector(t.pspi_logits), s0 = to_vector(s.pspi_logits);
    double kl = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      kl += scalar_kl({t0.begin() + b * kClasses, t0.begin() + (b + 1) * kClasses},
                      {s0.begin() + b * kClasses, s0.begin() + (b + 1) * kClasses}, w.temperature);
    }
    REQUIRE(loss.terms.pspi_distill == doctest::Approx(kl / B).epsilon(1e-9));
  }
}

TEST_CASE("compose_loss sends no gradient to the teacher") {
  Rng rng(2);
  ModelConfig cfg;
  cfg.image_size = 16;
  cfg.patch_size = 8;
  cfg.hidden_dim = 16;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.in_channels = 1;
  const auto tparams = init_params(cfg, 1);
  cfg.in_channels = 3;
  const auto sparams = init_params(cfg, 2);
  const Tensor heat = random_tensor(rng, {2, 16, 16, 1}, 0, 1, false);
  const Tensor rgb = random_tensor(rng, {2, 16, 16, 3}, 0, 1, false);
  ModelConfig tcfg = cfg;
  tcfg.in_channels = 1;
  const auto t_out = forward(heat, tcfg, tparams);
  const auto s_out = forward(rgb, cfg, sparams);
  const auto loss = compose_loss(s_out, &t_out, std::vector<int>{1, 5}, Tensor::zeros({2, 6}), {});
  loss.total.backward();
  for (const auto& [name, t] : tparams.named()) {
    if (!t.defined() || !t.has_grad()) continue;
    for (double g : t.grad()) REQUIRE(g == 0.0);
  }
  bool student_grad = false;
  for (const auto& [name, t] : sparams.named())
    if (t.defined() && t.has_grad())
      for (double g : t.grad()) student_grad |= g != 0.0;
  CHECK(student_grad);
}

TEST_CASE("pair_modalities") {
  ScratchDir dir("pairs");
  DatasetSpec spec;
  spec.identities = 1;
  spec.expressions_per_identity = 1;
  spec.yaws = default_yaws(3);
  spec.resolution = 16;
  auto manifest = read_manifest(build_dataset(spec, dir.path(), false, 1).manifest_path);
  const auto pairs = pair_modalities(manifest);
  REQUIRE(pairs.size() == 6);
  std::set<std::string> heatmaps;
  std::size_t rigged = 0;
  for (const auto& p : pairs) {
    if (p.row.is_neutral()) {
      CHECK_FALSE(p.heatmap_path.has_value());
    } else {
      ++rigged;
      REQUIRE(p.heatmap_path.has_value());
      heatmaps.insert(*p.heatmap_path);
    }
  }
  CHECK(rigged == 3);
  CHECK(heatmaps.size() == 1);

  // the neutral partner is an all-zero heatmap
  const auto samples = load_samples(manifest, Modality::Rgb, {}, true, 1);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples.pspi[i] != 0) continue;
    bool zero = true;
    for (std::size_t k = 0; k < 16 * 16; ++k) zero &= samples.teacher_inputs[i * 256 + k] == 0.0f;
    CHECK(zero);
  }

  for (auto& row : manifest.rows) row.heatmap_path.reset();
  CHECK_THROWS_AS(pair_modalities(manifest), DataError);
}

TEST_CASE("epochs=0 saves the initialization; bad inputs are rejected") {
  const auto& data = toy();
  ScratchDir dir("init");
  auto o = tiny_options(0);
  o.checkpoint_dir = dir.path() / "ck";
  const auto res = train_student(data.manifest, nullptr, Role::Student, o);
  const auto ck = load_checkpoint(o.checkpoint_dir);
  const auto init = init_params(res.config, o.train.seed);
  const auto a = ck.params.named(), b = init.named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first.rfind("input.", 0) == 0) continue;
    CHECK(to_vector(a[i].second) == to_vector(b[i].second));
  }

  Manifest rgb_only = data.manifest;
  for (auto& row : rgb_only.rows) row.heatmap_path.reset();
  CHECK_THROWS_AS(train_teacher(rgb_only, tiny_options(1)), DataError);

  auto teacher_opts = tiny_options(0);
  teacher_opts.checkpoint_dir = dir.path() / "teacher";
  train_teacher(data.manifest, teacher_opts);
  const auto teacher = load_checkpoint(teacher_opts.checkpoint_dir);
  auto wide = tiny_options(1);
  wide.model.hidden_dim = 32;
  CHECK_THROWS_AS(train_student(data.manifest, &teacher, Role::Student, wide), ConfigError);
  CHECK_THROWS_AS(train_student(data.manifest, &teacher, Role::Baseline, tiny_options(1)), ConfigError);
  CHECK_THROWS_AS(train_student(data.manifest, &teacher, Role::Teacher, tiny_options(1)), ConfigError);

  auto bad = tiny_options(2);
  bad.train.freeze_epochs = 3;
  CHECK_THROWS_AS(train_teacher(data.manifest, bad), ConfigError);
  CHECK_THROWS_AS(parse_role("student2"), ConfigError);
}

TEST_CASE("frozen backbone stays bit-identical") {
  const auto& data = toy();
  auto o = tiny_options(2);
  o.train.freeze_epochs = 2;
  o.train.val_fraction = 0.0;  // keep the final parameters
  const auto res = train_teacher(data.manifest, o);
  const auto init = init_params(res.config, o.train.seed);
  const auto trained = res.params.backbone(), start = init.backbone();
  REQUIRE(trained.size() == start.size());
  for (std::size_t i = 0; i < trained.size(); ++i) REQUIRE(to_vector(trained[i]) == to_vector(start[i]));
  CHECK(to_vector(res.params.head_fc3_weight) != to_vector(init.head_fc3_weight));

  o.train.freeze_epochs = 1;
  const auto thawed = train_teacher(data.manifest, o);
  CHECK(to_vector(thawed.params.patch_weight) != to_vector(init.patch_weight));
}

TEST_CASE("zero distillation weights match the no-teacher run bit for bit") {
  const auto& data = toy();
  ScratchDir dir("lambda0");
  auto t = tiny_options(1);
  t.checkpoint_dir = dir.path() / "teacher";
  train_teacher(data.manifest, t);
  const auto teacher = load_checkpoint(t.checkpoint_dir);

  auto o = tiny_options(3);
  o.train.val_fraction = 0.0;
  o.weights.pspi_distill = o.weights.au_distill = o.weights.feature_distill = 0.0;
  const auto with = train_student(data.manifest, &teacher, Role::Student, o);
  const auto without = train_student(data.manifest, nullptr, Role::Student, o);
  CHECK(param_values(with.params) == param_values(without.params));
  REQUIRE(with.epochs.size() == without.epochs.size());
  for (std::size_t e = 0; e < with.epochs.size(); ++e) CHECK(with.epochs[e].total == without.epochs[e].total);
}

TEST_CASE("learning-rate schedule and loss bookkeeping") {
  const auto& data = toy();
  ScratchDir dir("sched");
  auto t = tiny_options(1);
  t.checkpoint_dir = dir.path() / "teacher";
  train_teacher(data.manifest, t);
  const auto teacher = load_checkpoint(t.checkpoint_dir);

  auto o = tiny_options(4);
  o.train.freeze_epochs = 2;
  std::vector<EpochRecord> seen;
  o.on_epoch = [&](const EpochRecord& r) { seen.push_back(r); };
  const auto res = train_student(data.manifest, &teacher, Role::Student, o);
  REQUIRE(seen.size() == 4);
  for (std::size_t e = 0; e < 4; ++e) {
    const auto& r = res.epochs[e];
    CHECK(r.epoch == e);
    CHECK(r.backbone_frozen == (e < 2));
    CHECK(r.lr_backbone == cosine_lr(double(e), 4.0, o.train.lr_backbone, o.train.floor_fraction));
    CHECK(r.lr_heads == cosine_lr(double(e), 4.0, o.train.lr_heads, o.train.floor_fraction));
    CHECK(r.lr_heads / r.lr_backbone == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(std::abs(r.total - r.terms.weighted(o.weights)) < 1e-6);
    CHECK(r.terms.feature_distill > 0.0);
    CHECK(epoch_record_json(r).find("\"feature_distill\"") != std::string::npos);
  }

  // bookkeeping uses the baseline's effective weights (no AU term)
  auto b = tiny_options(2);
  const auto base = train_student(data.manifest, nullptr, Role::Baseline, b);
  CHECK(base.config.au_queries == false);
  for (const auto& r : base.epochs) {
    CHECK(r.terms.au == 0.0);
    CHECK(std::abs(r.total - r.terms.pspi) < 1e-12);
  }
}

TEST_CASE("same seed gives identical checkpoints; splits are identity-disjoint") {
  const auto& data = toy();
  ScratchDir dir("determinism");
  auto o = tiny_options(2);
  o.checkpoint_dir = dir.path() / "a";
  const auto first = train_teacher(data.manifest, o);
  o.checkpoint_dir = dir.path() / "b";
  train_teacher(data.manifest, o);
  for (const auto& entry : fs::directory_iterator(dir.path() / "a")) {
    CHECK(read_file(entry.path()) == read_file(dir.path() / "b" / entry.path().filename()));
  }
  std::set<int> all;
  for (const auto* part : {&first.split.train, &first.split.val, &first.split.test})
    for (int s : *part) CHECK(all.insert(s).second);
  CHECK(all.size() == 8);
  CHECK_FALSE(first.split.test.empty());
  CHECK_FALSE(first.split.val.empty());
}

TEST_CASE("teacher training loss trends down") {
  const auto& data = toy();
  auto o = tiny_options(6);
  o.train.lr_heads = 3e-3;
  o.train.lr_backbone = 3e-4;
  const auto res = train_teacher(data.manifest, o);
  CHECK(res.epochs.back().total <= res.epochs.front().total);
}
