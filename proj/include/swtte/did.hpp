#pragma once

#include "swtte/cell_panel.hpp"
#include "swtte/design.hpp"
#include "swtte/panel.hpp"

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace swtte {

enum class AdjustmentMode { Unadjusted, OutcomeRegression, Ipw, DoublyRobust };

std::string_view to_string(AdjustmentMode m);
AdjustmentMode parse_adjustment_mode(std::string_view s);

struct AttOptions {
  std::optional<Covariate> covariate = Covariate::Excluded;
  AdjustmentMode mode = AdjustmentMode::DoublyRobust;
  /// Periods skipped before adoption when choosing the anchor:
  /// anchor = g - 1 - anticipation.
  int anticipation = 1;
  /// Drop (g, t) cells without admissible controls instead of failing.
  bool skip_inadmissible = false;
};

struct AttEntry {
  int group = 0;   // first exposed period of the timing group
  int period = 0;
  double att = 0.0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  bool placebo = false;
};

struct AttGrid {
  std::vector<AttEntry> entries;  // ordered by (group, period)
  std::map<int, int> anchors;     // group -> anchor period
  std::map<int, std::size_t> group_sizes;
  int anticipation = 1;
  std::vector<std::string> warnings;
};

/// Group-time ATT with not-yet-treated (and never-treated) comparisons.
/// ATT(g, t) contrasts Y_t - Y_anchor between group g and the clusters whose
/// first exposure is after t + anticipation.
AttGrid estimate_att_gt(const PanelDataset& panel, const DesignSchematic& schematic, const AttOptions& options = {});
AttGrid estimate_att_gt(const CellPanel& panel, const AttOptions& options = {});

/// Pre-period entries: for each group, t strictly between the first period
/// (the base) and the anchor, comparing Y_t - Y_base against clusters not yet
/// treated at the anchor.
AttGrid estimate_pre_att(const CellPanel& panel, const AttOptions& options = {});

enum class GroupWeighting { Equal, Size };
std::string_view to_string(GroupWeighting w);

enum class InferenceMethod { None, Model, ClusterBootstrap, Permutation, Placebo };
std::string_view to_string(InferenceMethod m);

struct InferenceResult {
  static constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  double estimate = kNaN;
  double se = kNaN;
  double ci_low = kNaN;
  double ci_high = kNaN;
  double p_value = kNaN;
  InferenceMethod method = InferenceMethod::None;
  std::size_t replicates = 0;
  std::optional<std::uint64_t> seed;
  std::size_t redraws = 0;  // bootstrap resamples redrawn as degenerate
  std::vector<std::string> warnings;
};

/// Mean of ATT(g, t) over each group's first `horizon` exposed periods, then
/// averaged across groups (equal or size weighted). Estimate only.
InferenceResult aggregate_att(const AttGrid& grid, int horizon = 3, GroupWeighting weighting = GroupWeighting::Equal);

struct DidSpec {
  AttOptions att;
  int horizon = 3;
  GroupWeighting weighting = GroupWeighting::Equal;
};

/// Aggregated ATT for a spec.
double did_estimate(const CellPanel& panel, const DidSpec& spec);

struct BootstrapOptions {
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
  bool parallel = true;
};

/// Cluster bootstrap with percentile 95% interval. Degenerate resamples are
/// redrawn; more than 20% degenerate draws is an error.
InferenceResult cluster_bootstrap(const PanelDataset& panel, const DesignSchematic& schematic, const DidSpec& spec,
                                  const BootstrapOptions& options);
InferenceResult cluster_bootstrap(const CellPanel& panel, const DidSpec& spec, const BootstrapOptions& options);

struct PlaceboResult {
  AttGrid grid;                 // pre-period entries only
  std::vector<double> ci_low;   // per entry, percentile bootstrap
  std::vector<double> ci_high;
  InferenceResult summary;      // estimate = max |pre-ATT|
  bool pass = false;            // every interval covers zero (no multiplicity correction)
};

PlaceboResult placebo_pretrends(const PanelDataset& panel, const DesignSchematic& schematic,
                                const AttOptions& options, const BootstrapOptions& bootstrap);
PlaceboResult placebo_pretrends(const CellPanel& panel, const AttOptions& options, const BootstrapOptions& bootstrap);

/// Type-7 sample quantile of unsorted data.
double quantile(std::vector<double> values, double q);

}  // namespace swtte
