#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "painforge/synth/manifest.hpp"
#include "painforge/tensor/tensor.hpp"

namespace painforge {

enum class Modality { Heatmap, Rgb };

/// An RGB frame and the frontal heatmap of the same (identity, expression).
/// Neutral frames have no heatmap and stand for an all-zero one.
struct ModalityPair {
  ManifestRow row;
  std::optional<std::string> heatmap_path;
};

/// Throws DataError naming the row when a rigged frame lacks a heatmap.
std::vector<ModalityPair> pair_modalities(const Manifest& manifest);

/// In-memory training samples of one modality. Heatmap sets hold one sample
/// per (identity, expression) plus one zero heatmap per identity's neutral
/// face; RGB sets hold every frame.
struct SampleSet {
  Modality modality = Modality::Rgb;
  std::size_t resolution = 0;
  std::size_t channels = 0;
  std::vector<float> inputs;            // [N, res, res, channels]
  std::vector<float> teacher_inputs;    // [N, res, res, 1] when loaded
  std::vector<int> pspi;
  std::vector<double> au;               // [N, 6]
  std::vector<int> subjects;

  std::size_t size() const { return pspi.size(); }
  std::size_t pixels_per_sample() const { return resolution * resolution * channels; }

  Tensor batch_inputs(std::span<const std::size_t> index) const;
  Tensor batch_teacher_inputs(std::span<const std::size_t> index) const;
  Tensor batch_au(std::span<const std::size_t> index) const;
  std::vector<int> batch_pspi(std::span<const std::size_t> index) const;
};

/// Loads the samples of `modality` whose subject is in `subjects` (all when
/// empty). With `with_teacher_inputs`, RGB samples also carry their paired
/// heatmap. Throws DataError when the modality is missing from the manifest.
SampleSet load_samples(const Manifest& manifest, Modality modality, const std::set<int>& subjects,
                       bool with_teacher_inputs, std::size_t workers);

/// Distinct subject ids in the manifest, sorted.
std::vector<int> manifest_subjects(const Manifest& manifest);

}  // namespace painforge
