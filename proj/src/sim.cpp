#include "swtte/sim.hpp"

#include "swtte/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace swtte {
namespace {

const std::string kModule = "sim";

}  // namespace

EffectProfile EffectProfile::constant(double delta) {
  if (!std::isfinite(delta)) throw Error(kModule, "effect must be finite");
  EffectProfile e;
  e.constant_ = delta;
  return e;
}

EffectProfile EffectProfile::by_exposure_time(std::vector<double> deltas) {
  if (deltas.empty()) throw Error(kModule, "exposure-time effect vector is empty");
  for (double d : deltas)
    if (!std::isfinite(d)) throw Error(kModule, "effect must be finite");
  EffectProfile e;
  e.by_time_ = std::move(deltas);
  return e;
}

double EffectProfile::at(int exposure_time) const {
  if (exposure_time <= 0) return 0.0;
  if (by_time_.empty()) return constant_;
  if (static_cast<std::size_t>(exposure_time) > by_time_.size())
    throw Error(kModule, "exposure time " + std::to_string(exposure_time) + " exceeds effect vector length " +
                             std::to_string(by_time_.size()));
  return by_time_[static_cast<std::size_t>(exposure_time - 1)];
}

std::vector<double> generate_outcomes(const DesignSchematic& schematic, const VarianceComponents& vc,
                                      std::span<const double> period_means, const EffectProfile& effect,
                                      Rng& rng, const GenerateOptions& options) {
  const std::size_t T = schematic.n_periods();
  if (period_means.size() != T)
    throw Error(kModule, "missing period mean: got " + std::to_string(period_means.size()) + " for " +
                             std::to_string(T) + " periods");
  if (!(vc.tau2 >= 0.0) || !(vc.sigma2_resid >= 0.0)) throw Error(kModule, "variance components must be >= 0");
  const double sd_a = std::sqrt(vc.tau2);
  const double sd_e = std::sqrt(vc.sigma2_resid);
  std::normal_distribution<double> z(0.0, 1.0);

  std::vector<double> y(schematic.n_clusters() * T, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < schematic.n_clusters(); ++i) {
    const double a = sd_a * z(rng);
    int k = 0;
    for (std::size_t j = 0; j < T; ++j) {
      const double e = sd_e * z(rng);
      const auto s = schematic.at(i, j);
      if (s == CellStatus::Exposed) ++k;
      if (s == CellStatus::Absent) continue;
      double v = period_means[j] + a + e + (s == CellStatus::Exposed ? effect.at(k) : 0.0);
      if (options.clip) v = std::clamp(v, 0.0, 100.0);
      y[i * T + j] = v;
    }
  }
  return y;
}

PanelDataset generate_panel(const DesignSchematic& schematic, const VarianceComponents& vc,
                            std::span<const double> period_means, const EffectProfile& effect,
                            std::uint64_t seed, const GenerateOptions& options) {
  auto rng = make_rng(seed, 0);
  const auto y = generate_outcomes(schematic, vc, period_means, effect, rng, options);
  const std::size_t T = schematic.n_periods();
  std::vector<PanelRecord> records;
  records.reserve(y.size());
  for (std::size_t i = 0; i < schematic.n_clusters(); ++i)
    for (std::size_t j = 0; j < T; ++j)
      if (schematic.at(i, j) != CellStatus::Absent)
        records.push_back({schematic.rows()[i].id, schematic.periods()[j], y[i * T + j]});
  return PanelDataset(std::move(records), {}, options.clip);
}

std::vector<double> period_means_from_trend(const DesignSchematic& schematic, const TrendFit& trend) {
  std::vector<double> m;
  m.reserve(schematic.n_periods());
  for (int p : schematic.periods()) m.push_back(trend.mean(p));
  return m;
}

}  // namespace swtte
