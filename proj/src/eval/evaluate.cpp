#include "painforge/eval/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "painforge/core/errors.hpp"
#include "painforge/core/hash.hpp"
#include "painforge/eval/metrics.hpp"
#include "painforge/tensor/tensor_io.hpp"
#include "painforge/train/data.hpp"
#include "painforge/train/inference.hpp"

namespace painforge {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

BinaryMetrics binary_metrics(std::span<const double> probs, std::size_t classes, std::span<const int> labels,
                             int threshold) {
  BinaryMetrics b;
  b.threshold = threshold;
  const std::size_t n = labels.size();
  const auto truth = binarize_pspi(labels, threshold);
  std::vector<double> score(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = static_cast<std::size_t>(std::max(threshold, 0)); c < classes; ++c)
      score[i] += probs[i * classes + c];
  b.positives = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), 1));
  b.negatives = n - b.positives;
  if (b.positives > 0 && b.negatives > 0) b.auroc = binary_auroc(score, truth);

  std::vector<int> pred(n);
  for (std::size_t i = 0; i < n; ++i) pred[i] = score[i] >= 0.5 ? 1 : 0;
  b.f1_at_half = f1_binary(pred, truth);

  std::set<double> cuts(score.begin(), score.end());
  b.best_f1_cut = 0.5;
  b.best_f1_optimistic = b.f1_at_half;
  for (double cut : cuts) {
    for (std::size_t i = 0; i < n; ++i) pred[i] = score[i] >= cut ? 1 : 0;
    const double f = f1_binary(pred, truth);
    if (f > b.best_f1_optimistic) {
      b.best_f1_optimistic = f;
      b.best_f1_cut = cut;
    }
  }
  return b;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json block_json(const MetricsBlock& m) {
  json j;
  j["samples"] = m.samples;
  j["macro_auroc"] = optional_json(m.macro_auroc);
  json per = json::array();
  for (const auto& v : m.per_class_auroc) per.push_back(optional_json(v));
  j["per_class_auroc"] = per;
  j["accuracy_exact"] = m.accuracy_exact;
  j["accuracy_pm1"] = m.accuracy_pm1;
  j["accuracy_pm2"] = m.accuracy_pm2;
  json bin = json::array();
  for (const auto& b : m.binary) {
    bin.push_back({{"threshold", b.threshold},
                   {"positives", b.positives},
                   {"negatives", b.negatives},
                   {"auroc", optional_json(b.auroc)},
                   {"f1_at_0.5", b.f1_at_half},
                   {"best_f1_optimistic", b.best_f1_optimistic},
                   {"best_f1_cut", b.best_f1_cut}});
  }
  j["binary"] = bin;
  return j;
}

std::vector<int> int_list(const json& meta, const char* key) {
  if (!meta.contains(key) || !meta[key].is_array()) return {};
  return meta[key].get<std::vector<int>>();
}

// Mean of the defined values; empty when none are.
struct Mean {
  double sum = 0.0;
  std::size_t n = 0;
  void add(const std::optional<double>& v) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  std::optional<double> get() const { return n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt; }
};

MetricsBlock aggregate(const std::vector<FoldReport>& folds) {
  MetricsBlock agg;
  if (folds.empty()) return agg;
  const std::size_t classes = folds.front().metrics.per_class_auroc.size();
  const std::size_t nbin = folds.front().metrics.binary.size();
  Mean macro, exact, pm1, pm2;
  std::vector<Mean> per(classes);
  std::vector<Mean> bin_auroc(nbin), bin_f1(nbin), bin_best(nbin), bin_cut(nbin);
  for (const auto& f : folds) {
    const auto& m = f.metrics;
    agg.samples += m.samples;
    macro.add(m.macro_auroc);
    exact.add(m.accuracy_exact);
    pm1.add(m.accuracy_pm1);
    pm2.add(m.accuracy_pm2);
    for (std::size_t c = 0; c < classes; ++c) per[c].add(m.per_class_auroc[c]);
    for (std::size_t t = 0; t < nbin; ++t) {
      bin_auroc[t].add(m.binary[t].auroc);
      bin_f1[t].add(m.binary[t].f1_at_half);
      bin_best[t].add(m.binary[t].best_f1_optimistic);
      bin_cut[t].add(m.binary[t].best_f1_cut);
    }
  }
  agg.macro_auroc = macro.get();
  agg.accuracy_exact = exact.get().value_or(0.0);
  agg.accuracy_pm1 = pm1.get().value_or(0.0);
  agg.accuracy_pm2 = pm2.get().value_or(0.0);
  for (const auto& p : per) agg.per_class_auroc.push_back(p.get());
  for (std::size_t t = 0; t < nbin; ++t) {
    BinaryMetrics b;
    b.threshold = folds.front().metrics.binary[t].threshold;
    for (const auto& f : folds) {
      b.positives += f.metrics.binary[t].positives;
      b.negatives += f.metrics.binary[t].negatives;
    }
    b.auroc = bin_auroc[t].get();
    b.f1_at_half = bin_f1[t].get().value_or(0.0);
    b.best_f1_optimistic = bin_best[t].get().value_or(0.0);
    b.best_f1_cut = bin_cut[t].get().value_or(0.0);
    agg.binary.push_back(b);
  }
  return agg;
}

}  // namespace

MetricsBlock compute_metrics(std::span<const double> probs, std::size_t classes, std::span<const int> labels,
                             std::span<const int> thresholds) {
  if (probs.size() != labels.size() * classes) throw DimensionError("compute_metrics: probs must be N x classes");
  MetricsBlock m;
  m.samples = labels.size();
  m.per_class_auroc.assign(classes, std::nullopt);
  try {
    auto detail = macro_auroc_detail(probs, classes, labels);
    m.macro_auroc = detail.value;
    m.per_class_auroc = detail.per_class;
  } catch (const UndefinedMetricError&) {
  }
  std::vector<int> pred(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    pred[i] = static_cast<int>(argmax(probs.subspan(i * classes, classes)));
  m.accuracy_exact = tolerance_accuracy(pred, labels, 0);
  m.accuracy_pm1 = tolerance_accuracy(pred, labels, 1);
  m.accuracy_pm2 = tolerance_accuracy(pred, labels, 2);
  for (int t : thresholds) m.binary.push_back(binary_metrics(probs, classes, labels, t));
  return m;
}

std::string checkpoint_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() &&
        (entry.path().filename() == "index.json" || entry.path().extension() == ".p3dt"))
      files.push_back(entry.path());
  if (files.empty()) throw IoError("no checkpoint files in " + dir.string());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) {
    const std::string bytes = read_file(f);
    all += f.filename().string() + '\0' + std::to_string(bytes.size()) + '\0' + bytes;
  }
  return sha256_hex(all);
}

EvalReport evaluate_model(const std::vector<fs::path>& checkpoints, const Manifest& manifest, const EvalPlan& plan,
                          std::span<const int> thresholds, std::size_t workers) {
  if (checkpoints.empty()) throw ConfigError("no checkpoint to evaluate");
  for (int t : thresholds)
    if (t < 1 || t > 16) throw ConfigError("binary threshold " + std::to_string(t) + " outside [1, 16]");
  if (plan.folds > 0 && checkpoints.size() != plan.folds) {
    throw ConfigError(std::to_string(plan.folds) + "-fold evaluation needs one checkpoint per fold, got " +
                      std::to_string(checkpoints.size()));
  }
  if (plan.folds == 0 && checkpoints.size() != 1) throw ConfigError("holdout evaluation takes a single checkpoint");

  EvalReport report;
  report.manifest_hash = git_blob_hash_file(manifest.path);
  report.thresholds.assign(thresholds.begin(), thresholds.end());

  std::vector<Checkpoint> loaded;
  std::vector<json> metas;
  for (const auto& path : checkpoints) {
    loaded.push_back(load_checkpoint(path));
    metas.push_back(json::parse(loaded.back().metadata_json));
  }
  std::vector<std::vector<int>> test_sets;
  if (plan.folds > 0) {
    const std::uint64_t seed = plan.seed.value_or(metas.front().value("seed", std::uint64_t{0}));
    test_sets = subject_kfold(manifest_subjects(manifest), plan.folds, seed).folds;
  } else {
    test_sets.push_back(int_list(metas.front(), "test_subjects"));
    if (test_sets.front().empty()) {
      throw ConfigError("checkpoint " + checkpoints.front().string() + " records no held-out subjects; use folds");
    }
  }

  for (std::size_t f = 0; f < loaded.size(); ++f) {
    const auto& ck = loaded[f];
    const auto& meta = metas[f];
    std::set<int> seen;
    for (const char* key : {"train_subjects", "val_subjects"})
      for (int s : int_list(meta, key)) seen.insert(s);
    for (int s : test_sets[f]) {
      if (seen.count(s)) {
        throw IntegrityError("subject " + std::to_string(s) + " of fold " + std::to_string(f) +
                             " was used to train " + checkpoints[f].string());
      }
    }
    const Modality modality = ck.config.in_channels == 1 ? Modality::Heatmap : Modality::Rgb;
    const auto samples =
        load_samples(manifest, modality, std::set<int>(test_sets[f].begin(), test_sets[f].end()), false, workers);
    if (samples.resolution != ck.config.image_size) {
      throw ConfigError("checkpoint expects " + std::to_string(ck.config.image_size) + " px images, data has " +
                        std::to_string(samples.resolution));
    }
    const auto inf = run_inference(ck.config, ck.params, samples, false, 64);
    FoldReport fr;
    fr.fold = f;
    fr.subjects = test_sets[f];
    fr.checkpoint_hash = checkpoint_hash(checkpoints[f]);
    fr.role = meta.value("role", "");
    fr.metrics = compute_metrics(inf.probabilities(), ck.config.num_classes, samples.pspi, thresholds);
    report.folds.push_back(std::move(fr));
  }
  report.aggregate = aggregate(report.folds);
  return report;
}

std::string report_json(const EvalReport& report) {
  json j;
  j["format"] = "painforge-eval";
  j["manifest_hash"] = report.manifest_hash;
  j["thresholds"] = report.thresholds;
  json folds = json::array();
  for (const auto& f : report.folds) {
    folds.push_back({{"fold", f.fold},
                     {"subjects", f.subjects},
                     {"checkpoint_hash", f.checkpoint_hash},
                     {"role", f.role},
                     {"metrics", block_json(f.metrics)}});
  }
  j["folds"] = folds;
  j["aggregate"] = block_json(report.aggregate);
  return j.dump(2) + "\n";
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "fold,samples,macro_auroc,accuracy_exact,accuracy_pm1,accuracy_pm2";
  for (int t : report.thresholds)
    out << ",auroc_t" << t << ",f1_t" << t << ",best_f1_optimistic_t" << t;
  out << "\n";
  auto num = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return std::string(buf);
  };
  auto row = [&](const std::string& name, const MetricsBlock& m) {
    out << name << ',' << m.samples << ',' << num(m.macro_auroc) << ',' << num(m.accuracy_exact) << ','
        << num(m.accuracy_pm1) << ',' << num(m.accuracy_pm2);
    for (const auto& b : m.binary)
      out << ',' << num(b.auroc) << ',' << num(b.f1_at_half) << ',' << num(b.best_f1_optimistic);
    out << "\n";
  };
  for (const auto& f : report.folds) row(std::to_string(f.fold), f.metrics);
  row("mean", report.aggregate);
  return out.str();
}

}  // namespace painforge
