#include "painforge/synth/demographics.hpp"

#include <algorithm>
#include <numeric>

#include "painforge/core/errors.hpp"
#include "painforge/core/random.hpp"

namespace painforge {
namespace {

template <std::size_t N>
std::size_t find_label(const std::array<std::string_view, N>& labels, std::string_view s, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (labels[i] == s) return i;
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <std::size_t N>
std::array<std::size_t, N> largest_remainder(const std::array<std::size_t, N>& weights, std::size_t total) {
  const std::size_t wsum = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
  std::array<std::size_t, N> out{};
  std::array<std::size_t, N> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < N; ++i) {
    out[i] = weights[i] * total / wsum;
    remainder[i] = weights[i] * total % wsum;
    assigned += out[i];
  }
  std::array<std::size_t, N> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++out[order[i % N]];
  return out;
}

template <typename Enum, std::size_t N>
std::vector<Enum> pool(const std::array<std::size_t, N>& counts) {
  std::vector<Enum> v;
  for (std::size_t i = 0; i < N; ++i) v.insert(v.end(), counts[i], static_cast<Enum>(i));
  return v;
}

}  // namespace

std::string_view label(AgeGroup g) { return kAgeLabels[static_cast<std::size_t>(g)]; }
std::string_view label(Ethnicity e) { return kEthnicityLabels[static_cast<std::size_t>(e)]; }
std::string_view label(Gender g) { return kGenderLabels[static_cast<std::size_t>(g)]; }

AgeGroup parse_age_group(std::string_view s) { return static_cast<AgeGroup>(find_label(kAgeLabels, s, "age group")); }
Ethnicity parse_ethnicity(std::string_view s) {
  return static_cast<Ethnicity>(find_label(kEthnicityLabels, s, "ethnicity"));
}
Gender parse_gender(std::string_view s) { return static_cast<Gender>(find_label(kGenderLabels, s, "gender")); }

std::size_t DemographicConfig::total() const {
  const auto a = std::accumulate(age.begin(), age.end(), std::size_t{0});
  const auto e = std::accumulate(ethnicity.begin(), ethnicity.end(), std::size_t{0});
  const auto g = std::accumulate(gender.begin(), gender.end(), std::size_t{0});
  if (a != e || a != g) {
    throw ConfigError("inconsistent demographic marginals: age sums to " + std::to_string(a) + ", ethnicity to " +
                      std::to_string(e) + ", gender to " + std::to_string(g));
  }
  return a;
}

DemographicConfig DemographicConfig::reference() {
  DemographicConfig c;
  c.age = {1563, 937};
  c.ethnicity = {646, 460, 469, 82, 585, 258};
  c.gender = {1723, 777};
  return c;
}

DemographicConfig DemographicConfig::scaled_reference(std::size_t total) {
  const auto ref = reference();
  DemographicConfig c;
  c.age = largest_remainder(ref.age, total);
  c.ethnicity = largest_remainder(ref.ethnicity, total);
  c.gender = largest_remainder(ref.gender, total);
  return c;
}

std::vector<DemographicProfile> sample_demographics(const DemographicConfig& config, std::uint64_t seed) {
  const std::size_t n = config.total();
  auto ages = pool<AgeGroup>(config.age);
  auto eths = pool<Ethnicity>(config.ethnicity);
  auto genders = pool<Gender>(config.gender);
  Rng rng(derive_seed(seed, 0xde30));
  rng.shuffle(ages);
  rng.shuffle(eths);
  rng.shuffle(genders);
  std::vector<DemographicProfile> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = {ages[i], eths[i], genders[i], derive_seed(seed, 0x1d, i)};
  }
  return out;
}

DemographicConfig tally(const std::vector<DemographicProfile>& profiles) {
  DemographicConfig c;
  for (const auto& p : profiles) {
    ++c.age[static_cast<std::size_t>(p.age_group)];
    ++c.ethnicity[static_cast<std::size_t>(p.ethnicity)];
    ++c.gender[static_cast<std::size_t>(p.gender)];
  }
  return c;
}

}  // namespace painforge
