#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace painforge {

enum class AgeGroup : std::uint8_t { Young, Elderly };
enum class Ethnicity : std::uint8_t { Latino, White, SouthAsian, Black, MiddleEastern, EastAsian };
enum class Gender : std::uint8_t { Man, Woman };

inline constexpr std::array<std::string_view, 2> kAgeLabels{"Young", "Elderly"};
inline constexpr std::array<std::string_view, 6> kEthnicityLabels{"Latino", "White", "South Asian",
                                                                  "Black", "Middle Eastern", "East Asian"};
inline constexpr std::array<std::string_view, 2> kGenderLabels{"Man", "Woman"};

std::string_view label(AgeGroup g);
std::string_view label(Ethnicity e);
std::string_view label(Gender g);

AgeGroup parse_age_group(std::string_view s);
Ethnicity parse_ethnicity(std::string_view s);
Gender parse_gender(std::string_view s);

struct DemographicProfile {
  AgeGroup age_group = AgeGroup::Young;
  Ethnicity ethnicity = Ethnicity::Latino;
  Gender gender = Gender::Man;
  std::uint64_t identity_seed = 0;

  friend bool operator==(const DemographicProfile&, const DemographicProfile&) = default;
};

/// Marginal counts per category, indexed like the label arrays above.
struct DemographicConfig {
  std::array<std::size_t, 2> age{};
  std::array<std::size_t, 6> ethnicity{};
  std::array<std::size_t, 2> gender{};

  /// Common total; throws ConfigError when the three marginals disagree.
  std::size_t total() const;

  /// The 2,500-identity distribution of the reference dataset.
  static DemographicConfig reference();

  /// Reference proportions rescaled to `total` identities with the
  /// largest-remainder method, so every marginal sums to `total`.
  static DemographicConfig scaled_reference(std::size_t total);

  friend bool operator==(const DemographicConfig&, const DemographicConfig&) = default;
};

/// Exactly config.total() profiles whose marginals match the config. Each
/// category is expanded into a pool of labels, pools are shuffled
/// independently with the seed, and zipped together.
std::vector<DemographicProfile> sample_demographics(const DemographicConfig& config, std::uint64_t seed);

/// Marginal counts of a profile list, for summaries and tests.
DemographicConfig tally(const std::vector<DemographicProfile>& profiles);

}  // namespace painforge
