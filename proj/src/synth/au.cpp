#include "painforge/synth/au.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "painforge/core/errors.hpp"
#include "painforge/core/random.hpp"

namespace painforge {
namespace {

using Config = std::array<std::uint8_t, kNumAus>;

// All 6^5 * 2 integer configurations grouped by their PSPI value.
const std::array<std::vector<Config>, kNumPspiClasses>& configs_by_pspi() {
  static const auto table = [] {
    std::array<std::vector<Config>, kNumPspiClasses> t;
    for (std::uint8_t a4 = 0; a4 <= 5; ++a4)
      for (std::uint8_t a6 = 0; a6 <= 5; ++a6)
        for (std::uint8_t a7 = 0; a7 <= 5; ++a7)
          for (std::uint8_t a9 = 0; a9 <= 5; ++a9)
            for (std::uint8_t a10 = 0; a10 <= 5; ++a10)
              for (std::uint8_t a43 = 0; a43 <= 1; ++a43) {
                const int score = a4 + std::max(a6, a7) + std::max(a9, a10) + a43;
                t[static_cast<std::size_t>(score)].push_back({a4, a6, a7, a9, a10, a43});
              }
    return t;
  }();
  return table;
}

}  // namespace

bool AUVector::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

void AUVector::validate() const {
  for (std::size_t k = 0; k < kNumAus; ++k) {
    const double v = values[k];
    const bool ok = k == static_cast<std::size_t>(Au::AU43) ? (v == 0.0 || v == 1.0) : (v >= 0.0 && v <= kAuMax[k]);
    if (!ok) {
      throw ParameterError(std::string(kAuNames[k]) + " intensity " + std::to_string(v) + " out of range");
    }
  }
}

int pspi_score(const AUVector& au) {
  auto code = [&](Au a) { return static_cast<int>(std::lround(au[a])); };
  return code(Au::AU4) + std::max(code(Au::AU6), code(Au::AU7)) + std::max(code(Au::AU9), code(Au::AU10)) +
         code(Au::AU43);
}

AUVector sample_au_config(int target_pspi, std::uint64_t seed) {
  if (target_pspi < 0 || target_pspi > kMaxPspi) {
    throw ParameterError("target PSPI " + std::to_string(target_pspi) + " outside [0, 16]");
  }
  const auto& bucket = configs_by_pspi()[static_cast<std::size_t>(target_pspi)];
  Rng rng(seed);
  const auto& chosen = bucket[rng.below(bucket.size())];
  AUVector au;
  for (std::size_t k = 0; k < kNumAus; ++k) au.values[k] = chosen[k];
  return au;
}

const std::array<std::size_t, kNumPspiClasses>& pspi_config_counts() {
  static const auto counts = [] {
    std::array<std::size_t, kNumPspiClasses> c{};
    for (std::size_t s = 0; s < kNumPspiClasses; ++s) c[s] = configs_by_pspi()[s].size();
    return c;
  }();
  return counts;
}

}  // namespace painforge
