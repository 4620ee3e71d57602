#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "painforge/synth/au.hpp"
#include "painforge/synth/demographics.hpp"

namespace painforge {

/// Evenly spaced yaws in [-30, 30] degrees; a single view is frontal.
std::vector<double> default_yaws(std::size_t views);

struct DatasetSpec {
  std::size_t identities = 100;
  std::size_t expressions_per_identity = 10;
  std::vector<double> yaws = default_yaws(3);
  std::size_t resolution = 64;
  /// Probability of each target PSPI 0..16 when drawing an expression.
  std::array<double, kNumPspiClasses> pspi_distribution = uniform_pspi();
  std::uint64_t seed = 0;
  /// Marginal counts; defaults to the reference proportions rescaled to
  /// `identities`.
  std::optional<DemographicConfig> demographics;

  static std::array<double, kNumPspiClasses> uniform_pspi();

  /// Throws ConfigError on zero counts, an empty view list or a distribution
  /// that does not sum to 1.
  void validate() const;
  DemographicConfig resolved_demographics() const;

  std::size_t expected_frames() const { return identities * (expressions_per_identity + 1) * yaws.size(); }
  std::size_t expected_heatmaps() const { return identities * expressions_per_identity; }

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

/// Stable hash of every field that influences generated bytes.
std::string dataset_spec_hash(const DatasetSpec& spec);

struct BuildResult {
  std::filesystem::path manifest_path;
  std::size_t frames = 0;
  std::size_t heatmaps = 0;
  std::size_t identities_built = 0;
  std::size_t identities_skipped = 0;
  std::string manifest_hash;
  DemographicConfig demographics;
};

/// Renders every identity into out_dir/identities/NNNNN/ and assembles
/// out_dir/manifest.jsonl. Each identity writes its row fragment last, so an
/// interrupted build resumed with `resume` regenerates only unfinished
/// identities. Without `resume`, previous identity outputs are discarded.
/// Output bytes depend only on the spec, never on the worker count.
BuildResult build_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir, bool resume,
                          std::size_t workers);

}  // namespace painforge
