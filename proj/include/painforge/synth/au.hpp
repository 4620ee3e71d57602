#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace painforge {

inline constexpr std::size_t kNumAus = 6;
inline constexpr int kMaxPspi = 16;
inline constexpr std::size_t kNumPspiClasses = kMaxPspi + 1;

/// Position of each action unit inside an AUVector.
enum class Au : std::size_t { AU4 = 0, AU6 = 1, AU7 = 2, AU9 = 3, AU10 = 4, AU43 = 5 };

inline constexpr std::array<std::string_view, kNumAus> kAuNames{"AU4", "AU6", "AU7", "AU9", "AU10", "AU43"};

/// Upper bound of each intensity: graded AUs run 0..5, AU43 is binary.
inline constexpr std::array<double, kNumAus> kAuMax{5, 5, 5, 5, 5, 1};

/// Intensities of the six pain-relevant action units (AU4, AU6, AU7, AU9,
/// AU10, AU43).
struct AUVector {
  std::array<double, kNumAus> values{};

  double& operator[](Au au) { return values[static_cast<std::size_t>(au)]; }
  double operator[](Au au) const { return values[static_cast<std::size_t>(au)]; }

  bool is_zero() const;

  /// Throws ParameterError unless graded AUs lie in [0, 5] and AU43 is 0 or 1.
  void validate() const;

  friend bool operator==(const AUVector&, const AUVector&) = default;
};

/// PSPI = AU4 + max(AU6, AU7) + max(AU9, AU10) + AU43, evaluated on
/// intensities rounded to the nearest integer FACS code. Result in [0, 16].
int pspi_score(const AUVector& au);

/// Draws uniformly among the integer AU configurations whose PSPI equals
/// `target_pspi`. Throws ParameterError when the target is outside [0, 16].
AUVector sample_au_config(int target_pspi, std::uint64_t seed);

/// Number of integer configurations reaching each PSPI value.
const std::array<std::size_t, kNumPspiClasses>& pspi_config_counts();

}  // namespace painforge
