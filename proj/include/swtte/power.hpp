#pragma once

#include "swtte/design.hpp"
#include "swtte/estimation.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace swtte {

/// How Excluded (announcement) cells enter a power calculation.
enum class ExcludedPolicy { Drop, AsControl, AsExposed };

std::string_view to_string(ExcludedPolicy p);
ExcludedPolicy parse_excluded_policy(std::string_view s);
inline constexpr ExcludedPolicy kAllExcludedPolicies[] = {ExcludedPolicy::Drop, ExcludedPolicy::AsControl,
                                                          ExcludedPolicy::AsExposed};

/// Recodes Excluded cells (Drop -> Absent). Positivity is re-checked.
DesignSchematic apply_excluded_policy(const DesignSchematic& schematic, ExcludedPolicy policy);

/// Variance of the GLS treatment effect in
/// Y_ij = mu + beta_j + theta X_ij + alpha_i + e_ij, accumulated cluster by
/// cluster. Handles unequal period counts. Throws on singular information.
double gls_treatment_variance(const DesignSchematic& schematic, const VarianceComponents& vc,
                              ExcludedPolicy policy);

/// Closed form for complete grids with no Excluded or Absent cells.
double closed_form_treatment_variance(const DesignSchematic& schematic, const VarianceComponents& vc);

/// Precomputed GLS estimator of theta for a fixed design and known
/// components: theta_hat = sum_ij w_ij y_ij.
class GlsTreatmentEstimator {
 public:
  /// `schematic` must contain no Excluded cells (apply a policy first).
  GlsTreatmentEstimator(const DesignSchematic& schematic, const VarianceComponents& vc);

  double variance() const { return variance_; }
  /// `y` is row-major over the schematic grid; Absent cells are ignored.
  double estimate(std::span<const double> y) const;

 private:
  std::vector<double> weights_;  // 0 on Absent cells
  double variance_ = 0.0;
};

struct PowerSpec {
  double delta = 0.0;
  VarianceComponents vc;
  double alpha = 0.05;

  void validate() const;
};

enum class PowerMethod { Analytic, Simulated };
std::string_view to_string(PowerMethod m);

struct PowerResult {
  double variance = 0.0;
  double se = 0.0;
  double power = 0.0;
  PowerMethod method = PowerMethod::Analytic;
  ExcludedPolicy policy = ExcludedPolicy::Drop;
  std::optional<std::size_t> n_sims;
  std::optional<std::uint64_t> seed;
  double mc_se = 0.0;            // binomial Monte Carlo standard error
  std::size_t failures = 0;      // replicate fits that failed
  double mean_estimate = 0.0;    // simulated only
};

/// power = Phi(|delta| / se - z_{1 - alpha/2}); `exact_two_sided` adds the
/// opposite tail.
PowerResult analytic_power(const DesignSchematic& schematic, const PowerSpec& spec, ExcludedPolicy policy,
                           bool exact_two_sided = false);

struct SimulationOptions {
  std::size_t n_sims = 1000;
  std::uint64_t seed = 0;
  /// Re-estimate variance components by REML in every replicate. When false
  /// the generating components are treated as known.
  bool reestimate_vc = true;
  bool parallel = true;
};

/// Monte Carlo power: panels generated under the mixed model with the trend
/// as period means and a constant effect on cells the policy codes Exposed.
PowerResult simulated_power(const DesignSchematic& schematic, const PowerSpec& spec, const TrendFit& trend,
                            ExcludedPolicy policy, const SimulationOptions& options);

struct CalibrationTarget {
  std::string design_id;
  DesignSchematic schematic;
  PowerSpec spec;
  double target_power = 0.0;
};

struct CalibrationRow {
  ExcludedPolicy policy = ExcludedPolicy::Drop;
  std::vector<double> powers;  // one per target, NaN when not computable
  double max_abs_error = 0.0;
  bool within_tolerance = false;
};

struct Calibration {
  std::vector<CalibrationRow> rows;
  std::optional<ExcludedPolicy> selected;  // smallest max error among policies within tolerance
  double tolerance = 0.02;
};

Calibration calibrate_excluded(std::span<const CalibrationTarget> targets, double tolerance = 0.02);

}  // namespace swtte
