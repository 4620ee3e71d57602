#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "painforge/synth/au.hpp"
#include "painforge/synth/demographics.hpp"

namespace painforge {

/// One frame of a generated dataset. Paths are relative to the manifest's
/// directory. Neutral frames have no heatmap and no expression id.
struct ManifestRow {
  int identity_id = 0;
  int view_id = 0;
  double camera_yaw = 0.0;
  std::string rgb_path;
  std::optional<std::string> heatmap_path;
  AUVector au;
  int pspi = 0;
  AgeGroup age_group = AgeGroup::Young;
  Ethnicity ethnicity = Ethnicity::Latino;
  Gender gender = Gender::Man;
  int split_subject_id = 0;
  std::optional<int> expression_id;

  bool is_neutral() const { return !expression_id.has_value(); }

  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

/// Single-line JSON encoding (keys sorted, no trailing newline).
std::string manifest_line(const ManifestRow& row);

/// Throws DataError naming `line_number` when a field is missing or malformed.
ManifestRow parse_manifest_line(std::string_view line, std::size_t line_number);

struct Manifest {
  std::filesystem::path path;
  std::vector<ManifestRow> rows;

  std::filesystem::path root() const { return path.parent_path(); }
  std::filesystem::path resolve(const std::string& relative) const { return root() / relative; }
};

Manifest read_manifest(const std::filesystem::path& path);

}  // namespace painforge
