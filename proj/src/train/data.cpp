#include "painforge/train/data.hpp"

#include <algorithm>
#include <map>

#include "painforge/core/errors.hpp"
#include "painforge/core/parallel.hpp"
#include "painforge/synth/au.hpp"
#include "painforge/tensor/tensor_io.hpp"

namespace painforge {

namespace {

struct PendingSample {
  std::optional<std::string> input;    // empty means zero heatmap
  std::optional<std::string> teacher;  // heatmap partner for RGB samples
  const ManifestRow* row = nullptr;
};

std::vector<float> load_image(const Manifest& manifest, const std::string& rel, std::size_t& res,
                              std::size_t channels) {
  const auto blob = read_tensor_file(manifest.resolve(rel));
  const bool ok = (channels == 1 && blob.shape.size() == 2) ||
                  (blob.shape.size() == 3 && blob.shape[2] == channels);
  if (!ok || blob.shape[0] != blob.shape[1]) {
    throw DataError(rel + ": unexpected image shape " + shape_str(blob.shape));
  }
  if (res != 0 && blob.shape[0] != res) throw DataError(rel + ": resolution differs from the rest of the dataset");
  res = blob.shape[0];
  return {blob.values.begin(), blob.values.end()};
}

Tensor gather(const std::vector<float>& data, std::size_t per, Shape tail, std::span<const std::size_t> index) {
  std::vector<double> out(index.size() * per);
  for (std::size_t b = 0; b < index.size(); ++b) {
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(index[b] * per), per,
                out.begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  Shape shape{index.size()};
  shape.insert(shape.end(), tail.begin(), tail.end());
  return Tensor::from_vector(std::move(shape), std::move(out));
}

}  // namespace

std::vector<ModalityPair> pair_modalities(const Manifest& manifest) {
  std::vector<ModalityPair> pairs;
  pairs.reserve(manifest.rows.size());
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const auto& row = manifest.rows[i];
    if (!row.is_neutral() && !row.heatmap_path) {
      throw DataError("manifest row " + std::to_string(i + 1) + " (" + row.rgb_path +
                      ") is a rigged frame without a heatmap");
    }
    pairs.push_back({row, row.is_neutral() ? std::nullopt : row.heatmap_path});
  }
  return pairs;
}

std::vector<int> manifest_subjects(const Manifest& manifest) {
  std::set<int> s;
  for (const auto& row : manifest.rows) s.insert(row.split_subject_id);
  return {s.begin(), s.end()};
}

Tensor SampleSet::batch_inputs(std::span<const std::size_t> index) const {
  return gather(inputs, pixels_per_sample(), {resolution, resolution, channels}, index);
}

Tensor SampleSet::batch_teacher_inputs(std::span<const std::size_t> index) const {
  if (teacher_inputs.empty()) throw DataError("sample set has no paired heatmaps loaded");
  return gather(teacher_inputs, resolution * resolution, {resolution, resolution, 1}, index);
}

Tensor SampleSet::batch_au(std::span<const std::size_t> index) const {
  std::vector<double> out(index.size() * kNumAus);
  for (std::size_t b = 0; b < index.size(); ++b)
    std::copy_n(au.begin() + static_cast<std::ptrdiff_t>(index[b] * kNumAus), kNumAus,
                out.begin() + static_cast<std::ptrdiff_t>(b * kNumAus));
  return Tensor::from_vector({index.size(), kNumAus}, std::move(out));
}

std::vector<int> SampleSet::batch_pspi(std::span<const std::size_t> index) const {
  std::vector<int> out(index.size());
  for (std::size_t b = 0; b < index.size(); ++b) out[b] = pspi[index[b]];
  return out;
}

SampleSet load_samples(const Manifest& manifest, Modality modality, const std::set<int>& subjects,
                       bool with_teacher_inputs, std::size_t workers) {
  const auto pairs = pair_modalities(manifest);
  auto wanted = [&](const ManifestRow& r) { return subjects.empty() || subjects.count(r.split_subject_id) > 0; };

  std::vector<PendingSample> pending;
  if (modality == Modality::Heatmap) {
    if (std::none_of(manifest.rows.begin(), manifest.rows.end(), [](const auto& r) { return r.heatmap_path; })) {
      throw DataError("manifest " + manifest.path.string() + " has no heatmaps; a heatmap model cannot train on it");
    }
    // one sample per (identity, expression); -1 marks the neutral face
    std::map<std::pair<int, int>, const ModalityPair*> unique;
    for (const auto& p : pairs) {
      if (!wanted(p.row)) continue;
      unique.emplace(std::make_pair(p.row.identity_id, p.row.expression_id.value_or(-1)), &p);
    }
    for (const auto& [key, p] : unique) pending.push_back({p->heatmap_path, std::nullopt, &p->row});
  } else {
    for (const auto& p : pairs)
      if (wanted(p.row)) pending.push_back({p.row.rgb_path, p.heatmap_path, &p.row});
  }
  if (pending.empty()) throw DataError("no samples selected from " + manifest.path.string());

  SampleSet set;
  set.modality = modality;
  set.channels = modality == Modality::Heatmap ? 1 : 3;
  // probe the resolution from the first stored image
  std::size_t res = 0;
  for (const auto& p : pairs) {
    const std::string& probe = modality == Modality::Rgb ? p.row.rgb_path : p.heatmap_path.value_or("");
    if (probe.empty()) continue;
    load_image(manifest, probe, res, set.channels);
    break;
  }
  set.resolution = res;
  const std::size_t n = pending.size(), per = res * res * set.channels;
  set.inputs.assign(n * per, 0.0f);
  const bool teacher = with_teacher_inputs && modality == Modality::Rgb;
  if (teacher) set.teacher_inputs.assign(n * res * res, 0.0f);
  set.pspi.resize(n);
  set.au.resize(n * kNumAus);
  set.subjects.resize(n);

  parallel_for(n, workers, [&](std::size_t i) {
    const auto& s = pending[i];
    std::size_t r = res;
    if (s.input) {
      const auto img = load_image(manifest, *s.input, r, set.channels);
      std::copy(img.begin(), img.end(), set.inputs.begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    if (teacher && s.teacher) {
      const auto img = load_image(manifest, *s.teacher, r, 1);
      std::copy(img.begin(), img.end(), set.teacher_inputs.begin() + static_cast<std::ptrdiff_t>(i * res * res));
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = *pending[i].row;
    set.pspi[i] = row.pspi;
    std::copy(row.au.values.begin(), row.au.values.end(), set.au.begin() + static_cast<std::ptrdiff_t>(i * kNumAus));
    set.subjects[i] = row.split_subject_id;
  }
  return set;
}

}  // namespace painforge
