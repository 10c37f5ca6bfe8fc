#pragma once

#include "swtte/design.hpp"
#include "swtte/estimation.hpp"
#include "swtte/panel.hpp"
#include "swtte/rng.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace swtte {

/// Treatment effect on an Exposed cell as a function of exposure time
/// (1 = first Exposed period of the cluster).
class EffectProfile {
 public:
  static EffectProfile constant(double delta);
  static EffectProfile by_exposure_time(std::vector<double> deltas);

  bool is_constant() const { return by_time_.empty(); }
  /// Throws when exposure_time exceeds the vector length.
  double at(int exposure_time) const;
  std::size_t max_exposure_time() const { return by_time_.size(); }

 private:
  double constant_ = 0.0;
  std::vector<double> by_time_;
};

struct GenerateOptions {
  bool clip = false;  // clamp outcomes to [0, 100]
};

/// Row-major cluster x period outcomes for one replicate; Absent cells are
/// NaN. Excluded cells get no effect and do not advance exposure time.
std::vector<double> generate_outcomes(const DesignSchematic& schematic, const VarianceComponents& vc,
                                      std::span<const double> period_means, const EffectProfile& effect,
                                      Rng& rng, const GenerateOptions& options = {});

/// Y_ij = m_j + effect(k_ij) + alpha_i + e_ij. Identical (inputs, seed)
/// yields an identical panel.
PanelDataset generate_panel(const DesignSchematic& schematic, const VarianceComponents& vc,
                            std::span<const double> period_means, const EffectProfile& effect,
                            std::uint64_t seed, const GenerateOptions& options = {});

/// Period means from a trend fit, aligned to the schematic's periods.
std::vector<double> period_means_from_trend(const DesignSchematic& schematic, const TrendFit& trend);

}  // namespace swtte
