#pragma once

// Target-trial / emulation protocol: eight components, each described for
// the hypothetical randomized trial and for its observational analog.
//
// File format (version 1): '#' comments, a [protocol] section carrying
// `version = 1` and `title`, then one section per component. Keys take the
// form `<side>.<field>` with side `target` or `emulation`:
//
//   [follow_up]
//   target.study_range = 15-30
//   emulation.excluded_periods = 1
//
// Lists are comma separated; booleans are true/false.

#include "swtte/design.hpp"
#include "swtte/did.hpp"
#include "swtte/panel.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace swtte::protocol {

inline constexpr int kFormatVersion = 1;

enum class Estimand { ATE, ATT, Other };
std::string_view to_string(Estimand e);

struct Eligibility {
  std::string text;
  std::string units;
  std::optional<double> threshold_pct;  // eligible when coverage is strictly below
  std::optional<int> as_of;             // period the threshold is evaluated at
  std::vector<std::string> exclusions;
  bool operator==(const Eligibility&) const = default;
};

struct TreatmentStrategies {
  std::string text;
  std::string exposed;
  std::string control;
  std::string min_features;
  bool operator==(const TreatmentStrategies&) const = default;
};

struct Assignment {
  std::string text;
  std::string design_type;
  std::string exchangeability;
  bool operator==(const Assignment&) const = default;
};

struct FollowUp {
  std::string text;
  std::optional<PeriodRange> study_range;
  std::string time_zero;
  std::optional<int> excluded_periods;  // periods excluded from the announcement on
  bool operator==(const FollowUp& o) const {
    auto rng = [](const std::optional<PeriodRange>& r) {
      return r ? std::optional<std::pair<int, int>>({r->first, r->last}) : std::nullopt;
    };
    return text == o.text && rng(study_range) == rng(o.study_range) && time_zero == o.time_zero &&
           excluded_periods == o.excluded_periods;
  }
};

struct Outcomes {
  std::string text;
  std::string measure;
  std::string aggregation;
  bool operator==(const Outcomes&) const = default;
};

struct CausalContrast {
  std::string text;
  std::optional<Estimand> estimand;
  std::optional<int> horizon;
  std::optional<GroupWeighting> group_weighting;
  std::string scale;
  bool operator==(const CausalContrast&) const = default;
};

struct IdentifyingAssumptions {
  std::string text;
  std::optional<bool> no_anticipation;
  std::optional<bool> no_spillover;
  std::string parallel_trends;
  std::vector<std::string> effect_heterogeneity;
  bool operator==(const IdentifyingAssumptions&) const = default;
};

struct AnalysisPlan {
  std::string text;
  std::string estimator;
  std::vector<std::string> inference;
  std::vector<std::string> power;
  std::string covariate;
  std::string comparison;
  bool operator==(const AnalysisPlan&) const = default;
};

/// One column of the protocol table.
struct ProtocolColumn {
  Eligibility eligibility;
  TreatmentStrategies treatment_strategies;
  Assignment assignment;
  FollowUp follow_up;
  Outcomes outcomes;
  CausalContrast causal_contrast;
  IdentifyingAssumptions identifying_assumptions;
  AnalysisPlan analysis_plan;
  bool operator==(const ProtocolColumn&) const = default;
};

struct ProtocolDoc {
  int version = kFormatVersion;
  std::string title;
  ProtocolColumn target;
  ProtocolColumn emulation;
  bool operator==(const ProtocolDoc&) const = default;
};

/// Section names in component order (1..8).
inline constexpr std::array<std::string_view, 8> kComponentKeys = {
    "eligibility", "treatment_strategies",    "assignment",   "follow_up",
    "outcomes",    "causal_contrast", "identifying_assumptions", "analysis_plan"};
inline constexpr std::array<std::string_view, 8> kComponentTitles = {
    "1. Eligibility Criteria", "2. Treatment Strategies", "3. Assignment Procedures", "4. Follow-Up",
    "5. Outcomes",             "6. Causal Contrasts",     "7. Identifying Assumptions", "8. Data Analysis Plan"};

enum class Severity { Info, Warning, Error };
std::string_view to_string(Severity s);

struct Diagnostic {
  Severity severity = Severity::Error;
  int component = 0;  // 1..8, 0 for document-level
  std::string message;
  std::optional<int> line;
};

struct ParseResult {
  std::optional<ProtocolDoc> doc;  // present iff no error diagnostics
  std::vector<Diagnostic> diagnostics;
};

/// Never throws on malformed input; every problem becomes a diagnostic.
ParseResult parse_protocol(std::string_view source);

/// Canonical source text; parse_protocol(to_source(d)).doc == d.
std::string to_source(const ProtocolDoc& doc);

/// Two-column, eight-row table (markdown pipe layout).
std::string emit_comparison(const ProtocolDoc& doc);

std::string to_json(const ProtocolDoc& doc);

/// Registered analysis ids.
bool is_registered_estimator(std::string_view id);
bool is_registered_inference(std::string_view id);
bool is_registered_power(std::string_view id);

/// Cross-checks the emulation column against a schematic and panel data.
/// Ordered by component number; never throws for data problems.
std::vector<Diagnostic> check_consistency(const ProtocolDoc& doc, const DesignSchematic& schematic,
                                          const PanelDataset& panel);

std::size_t count(const std::vector<Diagnostic>& diags, Severity s);

}  // namespace swtte::protocol
