#include "painforge/synth/manifest.hpp"

#include <fstream>

#include "json.hpp"
#include "painforge/core/errors.hpp"

namespace painforge {

using nlohmann::json;

std::string manifest_line(const ManifestRow& row) {
  json j;
  j["identity_id"] = row.identity_id;
  j["view_id"] = row.view_id;
  j["camera_yaw"] = row.camera_yaw;
  j["rgb_path"] = row.rgb_path;
  j["heatmap_path"] = row.heatmap_path ? json(*row.heatmap_path) : json(nullptr);
  j["au"] = row.au.values;
  j["pspi"] = row.pspi;
  j["age_group"] = std::string(label(row.age_group));
  j["ethnicity"] = std::string(label(row.ethnicity));
  j["gender"] = std::string(label(row.gender));
  j["split_subject_id"] = row.split_subject_id;
  j["expression_id"] = row.expression_id ? json(*row.expression_id) : json(nullptr);
  return j.dump();
}

ManifestRow parse_manifest_line(std::string_view line, std::size_t line_number) {
  const std::string where = "manifest line " + std::to_string(line_number);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
  try {
    ManifestRow row;
    row.identity_id = j.at("identity_id").get<int>();
    row.view_id = j.at("view_id").get<int>();
    row.camera_yaw = j.at("camera_yaw").get<double>();
    row.rgb_path = j.at("rgb_path").get<std::string>();
    if (!j.at("heatmap_path").is_null()) row.heatmap_path = j.at("heatmap_path").get<std::string>();
    const auto au = j.at("au").get<std::vector<double>>();
    if (au.size() != kNumAus) throw DataError(where + ": au must have 6 entries");
    std::copy(au.begin(), au.end(), row.au.values.begin());
    row.pspi = j.at("pspi").get<int>();
    row.age_group = parse_age_group(j.at("age_group").get<std::string>());
    row.ethnicity = parse_ethnicity(j.at("ethnicity").get<std::string>());
    row.gender = parse_gender(j.at("gender").get<std::string>());
    row.split_subject_id = j.at("split_subject_id").get<int>();
    if (j.contains("expression_id") && !j["expression_id"].is_null()) {
      row.expression_id = j["expression_id"].get<int>();
    } else if (!j.contains("expression_id") && row.heatmap_path) {
      // rows written by other tools may omit the id; a heatmap marks a rigged frame
      row.expression_id = 0;
    }
    return row;
  } catch (const json::exception& e) {
    throw DataError(where + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(where + ": " + e.what());
  }
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  Manifest m;
  m.path = path;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    m.rows.push_back(parse_manifest_line(line, n));
  }
  return m;
}

}  // namespace painforge
