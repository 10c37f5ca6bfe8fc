#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace swtte {

/// One cluster-period outcome (percentage points).
struct PanelRecord {
  std::string cluster;
  int period = 0;
  double outcome = 0.0;

  bool operator==(const PanelRecord&) const = default;
};

/// Week-18 style covariates for one cluster, all in percent.
struct CovariateProfile {
  std::string cluster;
  double already_vaccinated_pct = 0.0;
  double excluded_pct = 0.0;
  double persuadable_pct = 0.0;
  std::optional<int> week;  // period the profile was measured in, when known

  bool operator==(const CovariateProfile&) const = default;
};

enum class Covariate { AlreadyVaccinated, Excluded, Persuadable };

double covariate_value(const CovariateProfile& p, Covariate c);
Covariate parse_covariate(std::string_view name);
std::string_view to_string(Covariate c);

/// Validates ranges and the excluded >= already-vaccinated ordering.
void validate_profile(const CovariateProfile& p);

class PanelDataset {
 public:
  PanelDataset() = default;
  /// Throws on duplicate (cluster, period), non-finite outcomes, outcomes
  /// outside [0, 100] when `check_range` is set, and duplicate or invalid
  /// covariate profiles. Simulated Gaussian panels are built unchecked.
  explicit PanelDataset(std::vector<PanelRecord> records, std::vector<CovariateProfile> covariates = {},
                        bool check_range = true);

  const std::vector<PanelRecord>& records() const { return records_; }
  const std::vector<CovariateProfile>& covariates() const { return covariates_; }
  std::size_t size() const { return records_.size(); }

  std::optional<double> outcome(std::string_view cluster, int period) const;
  const CovariateProfile* covariate(std::string_view cluster) const;
  /// Cluster ids in first-appearance order.
  std::vector<std::string> clusters() const;

  PanelDataset with_covariates(std::vector<CovariateProfile> covariates) const;

 private:
  std::vector<PanelRecord> records_;
  std::vector<CovariateProfile> covariates_;
  bool check_range_ = true;
  std::map<std::pair<std::string, int>, std::size_t> index_;
};

struct ColumnMap {
  std::string cluster = "cluster";
  std::string period = "period";
  std::string outcome = "outcome";
};

PanelDataset ingest_panel_csv(std::istream& in, const ColumnMap& columns = {}, bool check_range = true);
void write_panel_csv(std::ostream& out, const PanelDataset& panel, const ColumnMap& columns = {});

/// Columns: cluster (or state), already_vaccinated_pct (or W18_First_18Pop_Pct),
/// excluded_pct (or W18_Excl_Perc), persuadable_pct (or W18_Persu_Perc), and an
/// optional week column.
std::vector<CovariateProfile> ingest_covariates_csv(std::istream& in);
void write_covariates_csv(std::ostream& out, std::span<const CovariateProfile> profiles);

struct EligibilityRule {
  double threshold_pct = 70.0;
  int as_of = 18;
  std::set<std::string> exclusions;
};

/// Clusters whose cumulative first-dose coverage (the already-vaccinated
/// covariate measured at `as_of`) is strictly below the threshold and which
/// are not excluded. Order follows the panel's cluster order.
std::vector<std::string> apply_eligibility(const PanelDataset& panel, const EligibilityRule& rule);

struct MatchOptions {
  bool with_replacement = false;
  bool standardize = false;  // divide each covariate by its SD over treated + pool
};

struct MatchPair {
  std::string treated;
  std::string control;
  double distance = 0.0;  // sum of squared covariate differences
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<std::string> warnings;
};

MatchResult match_controls(std::span<const std::string> treated, std::span<const std::string> pool,
                           std::span<const CovariateProfile> covariates, const MatchOptions& options = {});

}  // namespace swtte
