#pragma once

#include "swtte/cell_panel.hpp"
#include "swtte/did.hpp"
#include "swtte/estimation.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace swtte {

struct TrialOptions {
  int horizon = 3;
  /// Known variance components; REML on the full model when absent.
  std::optional<VarianceComponents> vc;
  RemlOptions reml;
};

struct ExposureEffect {
  int exposure_time = 0;
  double estimate = 0.0;
  double se = 0.0;
  std::size_t n_cells = 0;  // cells informing this coefficient
};

struct TrialFit {
  InferenceResult result;  // mean of theta_1..theta_horizon, model-based
  std::vector<ExposureEffect> effects;
  VcFit variance;
  std::vector<std::string> notes;
};

/// GLS fit of Y_ij = mu + beta_j + sum_k theta_k 1{exposure time = k} +
/// alpha_i + e_ij on Control and Exposed cells (Excluded dropped).
TrialFit fit_trial_mixed_model(const PanelDataset& panel, const DesignSchematic& schematic,
                               const TrialOptions& options = {});
TrialFit fit_trial_mixed_model(const CellPanel& panel, const TrialOptions& options = {});

/// The two analysis-plan estimators a permutation test can wrap.
using EstimatorSpec = std::variant<DidSpec, TrialOptions>;

std::string describe(const EstimatorSpec& spec);
double evaluate_estimator(const EstimatorSpec& spec, const CellPanel& panel);

enum class PermutationMode { Exhaustive, Sampled };

struct PermutationOptions {
  std::size_t n_perms = 1000;
  std::uint64_t seed = 0;
  PermutationMode mode = PermutationMode::Sampled;
  bool parallel = true;
};

/// Number of distinct assignments of the observed adoption sequences to
/// clusters (a multinomial coefficient), saturating at UINT64_MAX.
std::uint64_t count_assignments(const CellPanel& panel);

/// Randomization test over reassignments of adoption sequences. Sampled:
/// p = (1 + #{|T*| >= |T|}) / (1 + n_perms). Exhaustive (at most 10,000
/// assignments, observed one included): p = #{|T*| >= |T|} / N.
InferenceResult permutation_test(const PanelDataset& panel, const DesignSchematic& schematic,
                                 const EstimatorSpec& spec, const PermutationOptions& options);
InferenceResult permutation_test(const CellPanel& panel, const EstimatorSpec& spec, const PermutationOptions& options);

inline constexpr std::uint64_t kMaxExhaustiveAssignments = 10000;

}  // namespace swtte
