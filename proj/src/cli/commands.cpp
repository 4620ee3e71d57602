#include "painforge/cli/commands.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "painforge/cli/ledger.hpp"
#include "painforge/core/errors.hpp"
#include "painforge/core/hash.hpp"
#include "painforge/core/parallel.hpp"
#include "painforge/eval/evaluate.hpp"
#include "painforge/tensor/tensor_io.hpp"

namespace painforge {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string opt_fixed(const std::optional<double>& v) { return v ? fixed(*v) : std::string("n/a"); }

fs::path manifest_path(const fs::path& data) {
  return fs::is_directory(data) ? data / "manifest.jsonl" : data;
}

fs::path ledger_path(const RunConfig& config) { return config.output_root / "ledger.jsonl"; }

struct Loaded {
  RunConfig config;
  std::map<std::string, std::string> overrides;
};

Loaded load_config(const fs::path& path, const std::optional<std::uint64_t>& seed) {
  Loaded l{load_run_config(path), {}};
  if (seed) {
    l.config.set_seed(*seed);
    l.overrides["seed"] = std::to_string(*seed);
  }
  return l;
}

// Clears a previous checkpoint, refusing to touch directories that are not one.
void prepare_checkpoint_dir(const fs::path& dir) {
  if (!fs::exists(dir)) return;
  if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
  if (fs::is_empty(dir)) return;
  if (!fs::exists(dir / "index.json")) {
    throw ConfigError("refusing to overwrite " + dir.string() + ": not a checkpoint directory");
  }
  fs::remove_all(dir);
}

void print_demographics(const DemographicConfig& d, std::ostream& log) {
  const double total = static_cast<double>(d.total());
  auto row = [&](std::string_view name, std::size_t n) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "  %-16s %6zu  %5.1f%%\n", std::string(name).c_str(), n, 100.0 * n / total);
    log << buf;
  };
  log << "age\n";
  for (std::size_t i = 0; i < d.age.size(); ++i) row(kAgeLabels[i], d.age[i]);
  log << "ethnicity\n";
  for (std::size_t i = 0; i < d.ethnicity.size(); ++i) row(kEthnicityLabels[i], d.ethnicity[i]);
  log << "gender\n";
  for (std::size_t i = 0; i < d.gender.size(); ++i) row(kGenderLabels[i], d.gender[i]);
}

// A finished training run ends its report with a summary line.
std::optional<json> finished_summary(const fs::path& ckpt) {
  const fs::path report = ckpt / "train_report.jsonl";
  if (!fs::exists(report) || !fs::exists(ckpt / "index.json")) return std::nullopt;
  std::istringstream in(read_file(report));
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  const json j = json::parse(last, nullptr, false);
  if (j.is_discarded() || j.value("kind", "") != "summary") return std::nullopt;
  return j;
}

struct TrainJob {
  Role role = Role::Student;
  fs::path out;
  std::optional<fs::path> teacher;
  std::size_t folds = 0;
  std::size_t fold = 0;
};

fs::path train_model(const RunConfig& config, const std::map<std::string, std::string>& overrides,
                     const fs::path& manifest_file, const TrainJob& job, std::ostream& log) {
  const auto start = Clock::now();
  const Manifest manifest = read_manifest(manifest_file);
  const std::string manifest_hash = git_blob_hash_file(manifest_file);
  const std::string cfg_hash = config_hash(config);

  std::optional<Checkpoint> teacher;
  std::string teacher_hash;
  if (job.teacher) {
    teacher = load_checkpoint(*job.teacher);
    teacher_hash = checkpoint_hash(*job.teacher);
  }

  TrainOptions o;
  o.model = config.model;
  o.model.image_size = config.dataset.resolution;
  o.train = config.train;
  o.train.folds = job.folds;
  o.train.fold = job.fold;
  o.weights = config.loss;
  o.workers = worker_count();
  o.checkpoint_dir = job.out;
  json meta{{"config_hash", cfg_hash}, {"manifest_hash", manifest_hash}};
  if (teacher) meta["teacher_checkpoint_hash"] = teacher_hash;
  if (job.folds > 0) {
    meta["folds"] = job.folds;
    meta["fold"] = job.fold;
  }
  o.metadata_json = meta.dump();

  std::string report;
  {
    json header{{"kind", "header"},      {"role", role_name(job.role)}, {"seed", config.train.seed},
                {"config_hash", cfg_hash}, {"manifest_hash", manifest_hash}};
    if (teacher) header["teacher_checkpoint_hash"] = teacher_hash;
    report += header.dump() + "\n";
  }
  o.on_epoch = [&](const EpochRecord& r) {
    json line = json::parse(epoch_record_json(r));
    line["kind"] = "epoch";
    report += line.dump() + "\n";
    log << "  [" << role_name(job.role) << "] epoch " << r.epoch + 1 << "/" << o.train.epochs << "  loss "
        << fixed(r.total) << "  val macro AUROC " << opt_fixed(r.val_macro_auroc) << "  " << fixed(r.wall_seconds, 1)
        << "s" << (r.backbone_frozen ? "  (backbone frozen)" : "") << "\n";
    log.flush();
  };

  prepare_checkpoint_dir(job.out);
  const TrainResult res = job.role == Role::Teacher
                              ? train_teacher(manifest, o)
                              : train_student(manifest, teacher ? &*teacher : nullptr, job.role, o);
  json summary{{"kind", "summary"},
               {"role", role_name(job.role)},
               {"seed", config.train.seed},
               {"config_hash", cfg_hash},
               {"manifest_hash", manifest_hash},
               {"parameters", res.params.count()},
               {"train_subjects", res.split.train.size()},
               {"val_subjects", res.split.val.size()},
               {"test_subjects", res.split.test.size()},
               {"best_epoch", res.best_epoch ? json(*res.best_epoch) : json(nullptr)},
               {"best_val_macro_auroc", res.best_val_macro_auroc ? json(*res.best_val_macro_auroc) : json(nullptr)},
               {"checkpoint_hash", checkpoint_hash(job.out)}};
  report += summary.dump() + "\n";
  write_file_atomic(job.out / "train_report.jsonl", report);

  LedgerRecord rec;
  rec.stage = std::string("train:") + role_name(job.role) + (job.folds ? ":fold" + std::to_string(job.fold) : "");
  rec.config_hash = cfg_hash;
  rec.input_manifest_hash = manifest_hash;
  rec.outputs = {job.out.string(), (job.out / "train_report.jsonl").string()};
  rec.wall_seconds = seconds_since(start);
  rec.seed = config.train.seed;
  rec.overrides = overrides;
  if (job.teacher) rec.overrides["teacher"] = job.teacher->string();
  RunLedger(ledger_path(config)).append(rec);

  log << "checkpoint: " << job.out.string() << "  (" << res.params.count() << " parameters, best epoch "
      << (res.best_epoch ? std::to_string(*res.best_epoch + 1) : std::string("n/a")) << ")\n";
  return job.out;
}

void print_report(const EvalReport& report, std::ostream& log) {
  log << "fold  samples  macroAUROC  acc     acc+-1  acc+-2";
  for (int t : report.thresholds) log << "  AUROC@" << t << "  F1@" << t;
  log << "\n";
  auto row = [&](const std::string& name, const MetricsBlock& m) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-5s %7zu  %-10s  %.4f  %.4f  %.4f", name.c_str(), m.samples,
                  opt_fixed(m.macro_auroc).c_str(), m.accuracy_exact, m.accuracy_pm1, m.accuracy_pm2);
    log << buf;
    for (const auto& b : m.binary) {
      std::snprintf(buf, sizeof(buf), "  %-7s  %.4f", opt_fixed(b.auroc).c_str(), b.f1_at_half);
      log << buf;
    }
    log << "\n";
  };
  for (const auto& f : report.folds) row(std::to_string(f.fold), f.metrics);
  if (report.folds.size() > 1) row("mean", report.aggregate);
}

EvalReport evaluate_to(const std::vector<fs::path>& checkpoints, const fs::path& manifest_file, std::size_t folds,
                       std::optional<std::uint64_t> seed, const std::vector<int>& thresholds, const fs::path& out) {
  const Manifest manifest = read_manifest(manifest_file);
  EvalPlan plan;
  plan.folds = folds;
  plan.seed = seed;
  EvalReport report = evaluate_model(checkpoints, manifest, plan, thresholds, worker_count());
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file_atomic(out, report_json(report));
  fs::path csv = out;
  csv.replace_extension(".csv");
  write_file_atomic(csv, report_csv(report));
  return report;
}

// Stage failures keep their exit-code class and gain the stage name.
template <typename F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const ConfigError& e) {
    throw ConfigError("stage " + name + " failed: " + e.what());
  } catch (const std::exception& e) {
    throw Error("stage " + name + " failed: " + e.what());
  }
}

}  // namespace

int exit_code_for(const std::exception& e) {
  return dynamic_cast<const ConfigError*>(&e) ? kExitUsage : kExitRuntime;
}

std::vector<int> parse_thresholds(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      const int t = std::stoi(item, &used);
      if (used != item.size()) throw ConfigError("");
      out.push_back(t);
    } catch (const std::exception&) {
      throw ConfigError("bad threshold list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty threshold list");
  for (int t : out)
    if (t < 1 || t > 16) throw ConfigError("thresholds must lie in [1, 16]");
  return out;
}

BuildResult cmd_generate(const GenerateArgs& args, std::ostream& log) {
  const auto start = Clock::now();
  auto [config, overrides] = load_config(args.config, args.seed);
  const fs::path out = args.out ? *args.out : config.output_root / "data";
  if (args.out) overrides["out"] = args.out->string();
  if (args.resume) overrides["resume"] = "true";

  const BuildResult br = build_dataset(config.dataset, out, args.resume, worker_count());
  log << "frames: " << br.frames << "\n"
      << "heatmaps: " << br.heatmaps << "\n"
      << "identities built: " << br.identities_built << ", reused: " << br.identities_skipped << "\n"
      << "manifest: " << br.manifest_path.string() << "\n"
      << "manifest hash: " << br.manifest_hash << "\n";
  print_demographics(br.demographics, log);

  LedgerRecord rec;
  rec.stage = "generate";
  rec.config_hash = config_hash(config);
  rec.outputs = {br.manifest_path.string(), (out / "dataset.json").string()};
  rec.wall_seconds = seconds_since(start);
  rec.seed = config.seed;
  rec.overrides = overrides;
  RunLedger(ledger_path(config)).append(rec);
  return br;
}

fs::path cmd_train(const TrainArgs& args, std::ostream& log) {
  auto [config, overrides] = load_config(args.config, args.seed);
  if (args.role == Role::Teacher && args.teacher) throw ConfigError("--role teacher does not take --teacher");
  if (args.role == Role::Baseline && args.teacher) throw ConfigError("--role baseline does not take --teacher");
  if (args.epochs) {
    config.train.epochs = *args.epochs;
    config.train.freeze_epochs = std::min(config.train.freeze_epochs, *args.epochs);
    overrides["epochs"] = std::to_string(*args.epochs);
  }
  if (args.folds > 0 && args.fold >= args.folds) throw ConfigError("--fold must be below --folds");
  if (args.folds > 0) {
    overrides["folds"] = std::to_string(args.folds);
    overrides["fold"] = std::to_string(args.fold);
  }
  TrainJob job;
  job.role = args.role;
  job.teacher = args.teacher;
  job.folds = args.folds;
  job.fold = args.fold;
  std::string name = role_name(args.role);
  if (args.folds > 0) name += "_fold" + std::to_string(args.fold);
  job.out = args.out ? *args.out : config.output_root / "checkpoints" / name;
  if (args.out) overrides["out"] = args.out->string();
  return train_model(config, overrides, manifest_path(args.data), job, log);
}

fs::path cmd_evaluate(const EvaluateArgs& args, std::ostream& log) {
  const auto start = Clock::now();
  if (args.checkpoints.empty()) throw ConfigError("give at least one --ckpt");
  std::optional<RunConfig> config;
  std::map<std::string, std::string> overrides;
  if (args.config) {
    auto loaded = load_config(*args.config, args.seed);
    config = loaded.config;
    overrides = loaded.overrides;
  }
  std::vector<int> thresholds{2, 3};
  if (config) thresholds = config->thresholds;
  if (args.thresholds) {
    thresholds = *args.thresholds;
    overrides["thresholds"] = "given";
  }
  const fs::path first = args.checkpoints.front();
  const fs::path out =
      args.out ? *args.out : first.parent_path() / (first.filename().string() + "_report.json");
  const fs::path manifest_file = manifest_path(args.data);
  const EvalReport report = evaluate_to(args.checkpoints, manifest_file, args.folds, args.seed, thresholds, out);
  print_report(report, log);
  log << "report: " << out.string() << "\n";

  LedgerRecord rec;
  rec.stage = "evaluate";
  rec.config_hash = config ? config_hash(*config) : "";
  rec.input_manifest_hash = report.manifest_hash;
  rec.outputs = {out.string()};
  rec.wall_seconds = seconds_since(start);
  rec.seed = config ? config->seed : args.seed.value_or(0);
  rec.overrides = overrides;
  RunLedger(config ? ledger_path(*config) : out.parent_path() / "ledger.jsonl").append(rec);
  return out;
}

fs::path cmd_pipeline(const PipelineArgs& args, std::ostream& log) {
  auto [config, overrides] = load_config(args.config, args.seed);
  if (args.out) {
    config.output_root = *args.out;
    overrides["out"] = args.out->string();
  }
  if (args.resume) overrides["resume"] = "true";
  const std::string cfg_hash = config_hash(config);
  const fs::path root = config.output_root;
  const fs::path data = root / "data";

  log << "== generate\n";
  const BuildResult br = stage("generate", [&] {
    const auto start = Clock::now();
    const BuildResult b = build_dataset(config.dataset, data, args.resume, worker_count());
    log << "frames: " << b.frames << ", heatmaps: " << b.heatmaps << ", identities reused: " << b.identities_skipped
        << "\n";
    LedgerRecord rec;
    rec.stage = "generate";
    rec.config_hash = cfg_hash;
    rec.outputs = {b.manifest_path.string()};
    rec.wall_seconds = seconds_since(start);
    rec.seed = config.seed;
    rec.overrides = overrides;
    RunLedger(ledger_path(config)).append(rec);
    return b;
  });

  struct Model {
    const char* label;
    const char* dir;
    Role role;
    bool distilled;
  };
  const std::vector<Model> models{{"Baseline", "baseline", Role::Baseline, false},
                                  {"+AU-Query", "au_query", Role::Student, false},
                                  {"+AU-Query+Heatmap", "distilled", Role::Student, true},
                                  {"Teacher", "teacher", Role::Teacher, false}};
  const std::size_t runs = config.eval_folds == 0 ? 1 : config.eval_folds;
  auto ckpt_dir = [&](const Model& m, std::size_t fold) {
    fs::path dir = root / "checkpoints" / m.dir;
    return config.eval_folds == 0 ? dir : dir / ("fold" + std::to_string(fold));
  };

  // The teacher trains first: the distilled student needs it.
  const std::vector<std::size_t> order{3, 0, 1, 2};
  for (std::size_t index : order) {
    const Model& m = models[index];
    for (std::size_t fold = 0; fold < runs; ++fold) {
      const fs::path out = ckpt_dir(m, fold);
      const std::string name = std::string("train ") + m.dir + (config.eval_folds ? " fold " + std::to_string(fold) : "");
      log << "== " << name << "\n";
      if (args.resume) {
        const auto summary = finished_summary(out);
        if (summary && summary->value("config_hash", "") == cfg_hash &&
            summary->value("manifest_hash", "") == br.manifest_hash) {
          log << "  up to date, skipped\n";
          continue;
        }
      }
      stage(name, [&] {
        TrainJob job;
        job.role = m.role;
        job.out = out;
        job.folds = config.eval_folds;
        job.fold = fold;
        if (m.distilled) job.teacher = ckpt_dir(models[3], fold);
        return train_model(config, overrides, br.manifest_path, job, log);
      });
    }
  }

  json rows = json::array();
  for (const auto& m : models) {
    log << "== evaluate " << m.dir << "\n";
    std::vector<fs::path> cks;
    for (std::size_t fold = 0; fold < runs; ++fold) cks.push_back(ckpt_dir(m, fold));
    const fs::path out = root / "reports" / (std::string(m.dir) + ".json");
    const EvalReport report = stage(std::string("evaluate ") + m.dir, [&] {
      const auto start = Clock::now();
      EvalReport r = evaluate_to(cks, br.manifest_path, config.eval_folds, config.seed, config.thresholds, out);
      LedgerRecord rec;
      rec.stage = std::string("evaluate:") + m.dir;
      rec.config_hash = cfg_hash;
      rec.input_manifest_hash = r.manifest_hash;
      rec.outputs = {out.string()};
      rec.wall_seconds = seconds_since(start);
      rec.seed = config.seed;
      rec.overrides = overrides;
      RunLedger(ledger_path(config)).append(rec);
      return r;
    });
    print_report(report, log);
    json hashes = json::array();
    for (const auto& f : report.folds) hashes.push_back(f.checkpoint_hash);
    const auto& a = report.aggregate;
    json binary = json::array();
    for (const auto& b : a.binary) {
      binary.push_back({{"threshold", b.threshold},
                        {"auroc", b.auroc ? json(*b.auroc) : json(nullptr)},
                        {"f1_at_0.5", b.f1_at_half}});
    }
    rows.push_back({{"model", m.label},
                    {"role", role_name(m.role)},
                    {"input", m.role == Role::Teacher ? "heatmap" : "rgb"},
                    {"checkpoint_hashes", hashes},
                    {"macro_auroc", a.macro_auroc ? json(*a.macro_auroc) : json(nullptr)},
                    {"accuracy_exact", a.accuracy_exact},
                    {"accuracy_pm1", a.accuracy_pm1},
                    {"accuracy_pm2", a.accuracy_pm2},
                    {"binary", binary}});
  }

  json final_report{{"format", "painforge-comparison"},
                    {"config_hash", cfg_hash},
                    {"manifest_hash", br.manifest_hash},
                    {"seed", config.seed},
                    {"folds", config.eval_folds},
                    {"rows", rows}};
  const fs::path out = root / "report.json";
  write_file_atomic(out, final_report.dump(2) + "\n");

  log << "\nmodel               input    macroAUROC  acc     acc+-1  acc+-2\n";
  for (const auto& r : rows) {
    char buf[128];
    const std::string auroc = r["macro_auroc"].is_null() ? "n/a" : fixed(r["macro_auroc"].get<double>());
    std::snprintf(buf, sizeof(buf), "%-19s %-8s %-10s  %.4f  %.4f  %.4f\n",
                  r["model"].get<std::string>().c_str(), r["input"].get<std::string>().c_str(), auroc.c_str(),
                  r["accuracy_exact"].get<double>(), r["accuracy_pm1"].get<double>(),
                  r["accuracy_pm2"].get<double>());
    log << buf;
  }
  log << "report: " << out.string() << "\n";
  LedgerRecord rec;
  rec.stage = "report";
  rec.config_hash = cfg_hash;
  rec.input_manifest_hash = br.manifest_hash;
  rec.outputs = {out.string()};
  rec.seed = config.seed;
  rec.overrides = overrides;
  RunLedger(ledger_path(config)).append(rec);
  return out;
}

}  // namespace painforge
