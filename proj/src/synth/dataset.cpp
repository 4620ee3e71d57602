#include "painforge/synth/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"
#include "painforge/core/errors.hpp"
#include "painforge/core/hash.hpp"
#include "painforge/core/parallel.hpp"
#include "painforge/core/random.hpp"
#include "painforge/synth/manifest.hpp"
#include "painforge/synth/mesh.hpp"
#include "painforge/synth/render.hpp"
#include "painforge/tensor/tensor_io.hpp"

namespace painforge {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFragmentName = "rows.jsonl";

std::string identity_dir_name(std::size_t id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05zu", id);
  return buf;
}

int draw_pspi(const std::array<double, kNumPspiClasses>& dist, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t s = 0; s < kNumPspiClasses; ++s) {
    acc += dist[s];
    if (u < acc) return static_cast<int>(s);
  }
  // rounding slack: last class with nonzero mass
  for (std::size_t s = kNumPspiClasses; s-- > 0;)
    if (dist[s] > 0.0) return static_cast<int>(s);
  return 0;
}

json spec_json(const DatasetSpec& spec) {
  const auto demo = spec.resolved_demographics();
  return json{{"identities", spec.identities},
              {"expressions_per_identity", spec.expressions_per_identity},
              {"yaws", spec.yaws},
              {"resolution", spec.resolution},
              {"pspi_distribution", spec.pspi_distribution},
              {"seed", spec.seed},
              {"demographics", {{"age", demo.age}, {"ethnicity", demo.ethnicity}, {"gender", demo.gender}}}};
}

void write_image(const fs::path& path, const Image& img) {
  Shape shape{img.height, img.width};
  if (img.channels > 1) shape.push_back(img.channels);
  write_tensor_file(path, shape, img.pixels, DType::F32);
}

// Renders one identity and returns its manifest lines.
std::string build_identity(const DatasetSpec& spec, const DemographicProfile& profile, std::size_t id,
                           const fs::path& out_dir) {
  const std::string rel_dir = "identities/" + identity_dir_name(id);
  const fs::path dir = out_dir / rel_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const FaceMesh neutral = make_identity_mesh(profile);
  std::string lines;
  auto base_row = [&](std::size_t view) {
    ManifestRow row;
    row.identity_id = static_cast<int>(id);
    row.view_id = static_cast<int>(view);
    row.camera_yaw = spec.yaws[view];
    row.age_group = profile.age_group;
    row.ethnicity = profile.ethnicity;
    row.gender = profile.gender;
    row.split_subject_id = static_cast<int>(id);
    return row;
  };

  for (std::size_t v = 0; v < spec.yaws.size(); ++v) {
    const std::string name = "neutral_v" + std::to_string(v) + ".p3dt";
    write_image(dir / name, render_rgb(neutral, profile, spec.yaws[v], spec.resolution));
    ManifestRow row = base_row(v);
    row.rgb_path = rel_dir + "/" + name;
    lines += manifest_line(row) + "\n";
  }

  for (std::size_t e = 0; e < spec.expressions_per_identity; ++e) {
    Rng rng(derive_seed(spec.seed, 0xe0 + id, e));
    const int target = draw_pspi(spec.pspi_distribution, rng);
    const AUVector au = sample_au_config(target, rng.next_u64());
    const FaceMesh rigged = apply_au_rig(neutral, au);
    const std::string heat_name = "expr" + std::to_string(e) + "_heatmap.p3dt";
    write_image(dir / heat_name, render_heatmap(neutral, rigged, 0.0, spec.resolution));
    for (std::size_t v = 0; v < spec.yaws.size(); ++v) {
      const std::string name = "expr" + std::to_string(e) + "_v" + std::to_string(v) + ".p3dt";
      write_image(dir / name, render_rgb(rigged, profile, spec.yaws[v], spec.resolution));
      ManifestRow row = base_row(v);
      row.rgb_path = rel_dir + "/" + name;
      row.heatmap_path = rel_dir + "/" + heat_name;
      row.au = au;
      row.pspi = pspi_score(au);
      row.expression_id = static_cast<int>(e);
      lines += manifest_line(row) + "\n";
    }
  }
  write_file_atomic(dir / kFragmentName, lines);
  return lines;
}

}  // namespace

std::vector<double> default_yaws(std::size_t views) {
  if (views == 0) return {};
  if (views == 1) return {0.0};
  std::vector<double> yaws(views);
  for (std::size_t i = 0; i < views; ++i) {
    yaws[i] = -30.0 + 60.0 * static_cast<double>(i) / static_cast<double>(views - 1);
  }
  return yaws;
}

std::array<double, kNumPspiClasses> DatasetSpec::uniform_pspi() {
  std::array<double, kNumPspiClasses> d;
  d.fill(1.0 / static_cast<double>(kNumPspiClasses));
  return d;
}

void DatasetSpec::validate() const {
  if (identities == 0 || expressions_per_identity == 0 || yaws.empty()) {
    throw ConfigError("identities, expressions and views must all be at least 1");
  }
  if (resolution == 0) throw ConfigError("resolution must be positive");
  for (double y : yaws)
    if (!(std::abs(y) <= 90.0)) throw ConfigError("yaw " + std::to_string(y) + " outside [-90, 90]");
  double total = 0.0;
  for (double p : pspi_distribution) {
    if (!(p >= 0.0)) throw ConfigError("PSPI distribution has a negative entry");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("PSPI distribution sums to " + std::to_string(total));
  if (resolved_demographics().total() != identities) {
    throw ConfigError("demographic marginals total " + std::to_string(resolved_demographics().total()) +
                      " but identities = " + std::to_string(identities));
  }
}

DemographicConfig DatasetSpec::resolved_demographics() const {
  return demographics ? *demographics : DemographicConfig::scaled_reference(identities);
}

std::string dataset_spec_hash(const DatasetSpec& spec) { return sha256_hex(spec_json(spec).dump()); }

BuildResult build_dataset(const DatasetSpec& spec, const fs::path& out_dir, bool resume, std::size_t workers) {
  spec.validate();
  const std::string spec_hash = dataset_spec_hash(spec);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) {
    throw IoError("cannot create output directory " + out_dir.string() + (ec ? ": " + ec.message() : ""));
  }
  const fs::path meta_path = out_dir / "dataset.json";
  const fs::path manifest_path = out_dir / "manifest.jsonl";
  if (resume && fs::exists(meta_path)) {
    const auto meta = json::parse(read_file(meta_path), nullptr, false);
    if (meta.is_discarded() || meta.value("spec_hash", "") != spec_hash) {
      throw ConfigError("cannot resume: " + out_dir.string() + " holds a dataset built from a different spec");
    }
  }
  if (!resume) {
    fs::remove_all(out_dir / "identities", ec);
    fs::remove(manifest_path, ec);
  }
  json meta = {{"format", "painforge-dataset"}, {"version", 1}, {"spec", spec_json(spec)}, {"spec_hash", spec_hash}};
  write_file_atomic(meta_path, meta.dump(2) + "\n");

  const auto profiles = sample_demographics(spec.resolved_demographics(), spec.seed);
  std::vector<std::string> fragments(spec.identities);
  std::vector<char> skipped(spec.identities, 0);
  parallel_for(spec.identities, workers, [&](std::size_t id) {
    const fs::path fragment = out_dir / "identities" / identity_dir_name(id) / kFragmentName;
    if (resume && fs::exists(fragment)) {
      fragments[id] = read_file(fragment);
      skipped[id] = 1;
      return;
    }
    fragments[id] = build_identity(spec, profiles[id], id, out_dir);
  });

  std::string manifest;
  for (const auto& f : fragments) manifest += f;
  write_file_atomic(manifest_path, manifest);

  BuildResult result;
  result.manifest_path = manifest_path;
  result.frames = spec.expected_frames();
  result.heatmaps = spec.expected_heatmaps();
  result.identities_skipped = static_cast<std::size_t>(std::count(skipped.begin(), skipped.end(), 1));
  result.identities_built = spec.identities - result.identities_skipped;
  result.manifest_hash = git_blob_hash(manifest);
  result.demographics = tally(profiles);

  meta["frames"] = result.frames;
  meta["heatmaps"] = result.heatmaps;
  meta["manifest_hash"] = result.manifest_hash;
  write_file_atomic(meta_path, meta.dump(2) + "\n");
  return result;
}

}  // namespace painforge
