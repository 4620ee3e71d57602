#include "painforge/cli/ledger.hpp"

#include <fstream>

#include "json.hpp"
#include "painforge/core/errors.hpp"

namespace painforge {

using nlohmann::json;

void RunLedger::append(const LedgerRecord& r) const {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  json j;
  j["stage"] = r.stage;
  j["config_hash"] = r.config_hash;
  j["input_manifest_hash"] = r.input_manifest_hash;
  j["outputs"] = r.outputs;
  j["wall_seconds"] = r.wall_seconds;
  j["seed"] = r.seed;
  j["overrides"] = r.overrides;
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << j.dump() << '\n';
  out.flush();
  if (!out) throw IoError("cannot append to run ledger " + path_.string());
}

std::vector<LedgerRecord> RunLedger::read() const {
  std::vector<LedgerRecord> records;
  std::ifstream in(path_, std::ios::binary);
  if (!in) return records;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      LedgerRecord r;
      r.stage = j.at("stage").get<std::string>();
      r.config_hash = j.at("config_hash").get<std::string>();
      r.input_manifest_hash = j.at("input_manifest_hash").get<std::string>();
      r.outputs = j.at("outputs").get<std::vector<std::string>>();
      r.wall_seconds = j.at("wall_seconds").get<double>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.overrides = j.at("overrides").get<std::map<std::string, std::string>>();
      records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError("run ledger " + path_.string() + " line " + std::to_string(number) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace painforge
