#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace painforge {

struct LedgerRecord {
  std::string stage;
  std::string config_hash;
  std::string input_manifest_hash;
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  /// Command-line flags that overrode config values.
  std::map<std::string, std::string> overrides;
};

/// Append-only JSONL record of every stage run.
class RunLedger {
 public:
  explicit RunLedger(std::filesystem::path path) : path_(std::move(path)) {}

  /// Appends one line and flushes; throws IoError on failure.
  void append(const LedgerRecord& record) const;
  std::vector<LedgerRecord> read() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace painforge
