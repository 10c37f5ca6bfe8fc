#pragma once

#include "swtte/design.hpp"
#include "swtte/estimation.hpp"
#include "swtte/panel.hpp"

#include <string>
#include <vector>

namespace fixture {

inline const std::vector<std::string> kMidwest = {"OH", "IL", "MI", "MO", "IA", "IN",
                                                  "KS", "MN", "ND", "NE", "SD", "WI"};
inline const std::vector<std::string> kDesignB = {"OH", "ND", "IL", "MN", "MI", "KS", "MO", "IN"};
inline const std::vector<std::string> kDesignC = {"OH", "IL", "MI", "MO"};

inline std::vector<swtte::ClusterSequence> midwest_sequences() {
  std::vector<swtte::ClusterSequence> out;
  for (const auto& id : kMidwest) {
    swtte::ClusterSequence s{id, std::nullopt, 1};
    if (id == "OH") s.announcement = 19;
    if (id == "IL") s.announcement = 24;
    if (id == "MI") s.announcement = 26;
    if (id == "MO") s.announcement = 29;
    out.push_back(s);
  }
  return out;
}

inline swtte::DesignSchematic design_a() {
  const auto seqs = midwest_sequences();
  return swtte::build_schematic(seqs, {15, 30}, 1);
}
inline swtte::DesignSchematic design_b() { return swtte::restrict_clusters(design_a(), kDesignB); }
inline swtte::DesignSchematic design_c() { return swtte::restrict_clusters(design_a(), kDesignC); }

// Design-parameter table: marginal variance and ICC per design.
inline swtte::VarianceComponents vc_design1() { return swtte::VarianceComponents::from_marginal(0.26, 0.39); }
inline swtte::VarianceComponents vc_design2() { return swtte::VarianceComponents::from_marginal(0.35, 0.42); }
inline constexpr double kDelta = 0.33;
inline constexpr double kAlpha = 0.05;

/// Synthetic week-18 profiles, all below 70% coverage.
inline std::vector<swtte::CovariateProfile> synthetic_profiles(const std::vector<std::string>& ids) {
  std::vector<swtte::CovariateProfile> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double a = 40.0 + 2.0 * static_cast<double>(i);
    out.push_back({ids[i], a, a + 10.0 + static_cast<double>(i % 3), 5.0 + static_cast<double>(i % 4), 18});
  }
  return out;
}

/// Profiles where every treated state sits inside the range of the
/// never-treated states, so propensity models do not separate.
inline std::vector<swtte::CovariateProfile> overlapping_profiles() {
  const std::vector<std::pair<std::string, double>> excl = {
      {"OH", 51}, {"IL", 53}, {"MI", 49}, {"MO", 55}, {"IA", 44}, {"IN", 58},
      {"KS", 47}, {"MN", 61}, {"ND", 42}, {"NE", 56}, {"SD", 45}, {"WI", 60}};
  std::vector<swtte::CovariateProfile> out;
  for (const auto& [id, e] : excl) out.push_back({id, e - 12.0, e, 100.0 - e - 20.0, 18});
  return out;
}

}  // namespace fixture
