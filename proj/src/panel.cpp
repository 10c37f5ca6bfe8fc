#include "swtte/panel.hpp"

#include "swtte/csv.hpp"
#include "swtte/error.hpp"

#include <algorithm>
#include <array>
#include <sstream>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

namespace swtte {
namespace {

const std::string kModule = "panel";

std::string fmt_num(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

double covariate_value(const CovariateProfile& p, Covariate c) {
  switch (c) {
    case Covariate::AlreadyVaccinated: return p.already_vaccinated_pct;
    case Covariate::Excluded: return p.excluded_pct;
    case Covariate::Persuadable: return p.persuadable_pct;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

Covariate parse_covariate(std::string_view name) {
  if (name == "already_vaccinated_pct" || name == "W18_First_18Pop_Pct") return Covariate::AlreadyVaccinated;
  if (name == "excluded_pct" || name == "W18_Excl_Perc") return Covariate::Excluded;
  if (name == "persuadable_pct" || name == "W18_Persu_Perc") return Covariate::Persuadable;
  throw Error(kModule, "unknown covariate '" + std::string(name) + "'");
}

std::string_view to_string(Covariate c) {
  switch (c) {
    case Covariate::AlreadyVaccinated: return "already_vaccinated_pct";
    case Covariate::Excluded: return "excluded_pct";
    case Covariate::Persuadable: return "persuadable_pct";
  }
  return "?";
}

void validate_profile(const CovariateProfile& p) {
  auto check = [&](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0 || v > 100.0)
      throw Error(kModule, "cluster '" + p.cluster + "': " + name + " = " + fmt_num(v) + " outside [0, 100]");
  };
  check(p.already_vaccinated_pct, "already_vaccinated_pct");
  check(p.excluded_pct, "excluded_pct");
  check(p.persuadable_pct, "persuadable_pct");
  if (p.excluded_pct < p.already_vaccinated_pct)
    throw Error(kModule, "cluster '" + p.cluster + "': excluded_pct (" + fmt_num(p.excluded_pct) +
                             ") is below already_vaccinated_pct (" + fmt_num(p.already_vaccinated_pct) + ")");
}

PanelDataset::PanelDataset(std::vector<PanelRecord> records, std::vector<CovariateProfile> covariates,
                           bool check_range)
    : records_(std::move(records)), covariates_(std::move(covariates)), check_range_(check_range) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (!std::isfinite(r.outcome))
      throw Error(kModule, "non-finite outcome for (" + r.cluster + ", " + std::to_string(r.period) + ")");
    if (check_range && (r.outcome < 0.0 || r.outcome > 100.0))
      throw Error(kModule, "outcome for (" + r.cluster + ", " + std::to_string(r.period) + ") = " +
                               fmt_num(r.outcome) + " outside [0, 100]");
    if (!index_.emplace(std::make_pair(r.cluster, r.period), i).second)
      throw Error(kModule, "duplicate (cluster, period) (" + r.cluster + ", " + std::to_string(r.period) + ")");
  }
  std::set<std::string> seen;
  for (const auto& p : covariates_) {
    validate_profile(p);
    if (!seen.insert(p.cluster).second)
      throw Error(kModule, "duplicate covariate profile for '" + p.cluster + "'");
  }
}

std::optional<double> PanelDataset::outcome(std::string_view cluster, int period) const {
  auto it = index_.find(std::make_pair(std::string(cluster), period));
  if (it == index_.end()) return std::nullopt;
  return records_[it->second].outcome;
}

const CovariateProfile* PanelDataset::covariate(std::string_view cluster) const {
  for (const auto& p : covariates_)
    if (p.cluster == cluster) return &p;
  return nullptr;
}

std::vector<std::string> PanelDataset::clusters() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : records_)
    if (seen.insert(r.cluster).second) out.push_back(r.cluster);
  return out;
}

PanelDataset PanelDataset::with_covariates(std::vector<CovariateProfile> covariates) const {
  return PanelDataset(records_, std::move(covariates), check_range_);
}

PanelDataset ingest_panel_csv(std::istream& in, const ColumnMap& columns, bool check_range) {
  const auto t = csv::read(in, kModule);
  const auto ci = t.require_column(columns.cluster, kModule);
  const auto pi = t.require_column(columns.period, kModule);
  const auto oi = t.require_column(columns.outcome, kModule);

  std::vector<PanelRecord> records;
  records.reserve(t.rows.size());
  std::map<std::pair<std::string, int>, std::size_t> first_row;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto rn = t.row_numbers[r];
    if (row[ci].empty())
      throw Error(kModule, "row " + std::to_string(rn) + ", column '" + columns.cluster + "': empty cluster id");
    PanelRecord rec{row[ci], csv::parse_int(row[pi], rn, columns.period, kModule),
                    csv::parse_double(row[oi], rn, columns.outcome, kModule)};
    if (check_range && (rec.outcome < 0.0 || rec.outcome > 100.0))
      throw Error(kModule, "row " + std::to_string(rn) + ", column '" + columns.outcome + "': " +
                               row[oi] + " outside [0, 100]");
    auto [it, inserted] = first_row.emplace(std::make_pair(rec.cluster, rec.period), rn);
    if (!inserted)
      throw Error(kModule, "row " + std::to_string(rn) + ": duplicate (cluster, period) (" + rec.cluster + ", " +
                               std::to_string(rec.period) + "), first seen at row " + std::to_string(it->second));
    records.push_back(std::move(rec));
  }
  return PanelDataset(std::move(records), {}, check_range);
}

void write_panel_csv(std::ostream& out, const PanelDataset& panel, const ColumnMap& columns) {
  out << csv::escape(columns.cluster) << ',' << csv::escape(columns.period) << ','
      << csv::escape(columns.outcome) << '\n';
  for (const auto& r : panel.records()) out << csv::escape(r.cluster) << ',' << r.period << ',' << fmt_num(r.outcome) << '\n';
}

std::vector<CovariateProfile> ingest_covariates_csv(std::istream& in) {
  const auto t = csv::read(in, kModule);
  auto pick = [&](std::initializer_list<std::string_view> names) -> std::size_t {
    for (auto n : names)
      if (auto c = t.column(n)) return *c;
    throw Error(kModule, "missing column '" + std::string(*names.begin()) + "'");
  };
  const auto ci = pick({"cluster", "state"});
  const auto ai = pick({"already_vaccinated_pct", "W18_First_18Pop_Pct"});
  const auto ei = pick({"excluded_pct", "W18_Excl_Perc"});
  const auto si = pick({"persuadable_pct", "W18_Persu_Perc"});
  const auto wi = t.column("week");

  std::vector<CovariateProfile> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto rn = t.row_numbers[r];
    CovariateProfile p;
    p.cluster = row[ci];
    p.already_vaccinated_pct = csv::parse_double(row[ai], rn, t.header[ai], kModule);
    p.excluded_pct = csv::parse_double(row[ei], rn, t.header[ei], kModule);
    p.persuadable_pct = csv::parse_double(row[si], rn, t.header[si], kModule);
    if (wi && !row[*wi].empty()) p.week = csv::parse_int(row[*wi], rn, "week", kModule);
    try {
      validate_profile(p);
    } catch (const Error& e) {
      throw Error(kModule, "row " + std::to_string(rn) + ": " + std::string(e.what()).substr(kModule.size() + 2));
    }
    if (!seen.insert(p.cluster).second)
      throw Error(kModule, "row " + std::to_string(rn) + ": duplicate cluster '" + p.cluster + "'");
    out.push_back(std::move(p));
  }
  return out;
}

void write_covariates_csv(std::ostream& out, std::span<const CovariateProfile> profiles) {
  out << "cluster,already_vaccinated_pct,excluded_pct,persuadable_pct,week\n";
  for (const auto& p : profiles) {
    out << csv::escape(p.cluster) << ',' << fmt_num(p.already_vaccinated_pct) << ',' << fmt_num(p.excluded_pct)
        << ',' << fmt_num(p.persuadable_pct) << ',';
    if (p.week) out << *p.week;
    out << '\n';
  }
}

std::vector<std::string> apply_eligibility(const PanelDataset& panel, const EligibilityRule& rule) {
  std::vector<std::string> candidates = panel.clusters();
  if (candidates.empty())
    for (const auto& p : panel.covariates()) candidates.push_back(p.cluster);

  std::vector<std::string> eligible;
  for (const auto& id : candidates) {
    const auto* p = panel.covariate(id);
    if (!p) throw Error(kModule, "missing covariate profile for cluster '" + id + "'");
    if (p->week && *p->week != rule.as_of)
      throw Error(kModule, "covariate profile for '" + id + "' measured in week " + std::to_string(*p->week) +
                               ", eligibility requires week " + std::to_string(rule.as_of));
    if (p->already_vaccinated_pct < rule.threshold_pct && !rule.exclusions.contains(id)) eligible.push_back(id);
  }
  return eligible;
}

MatchResult match_controls(std::span<const std::string> treated, std::span<const std::string> pool,
                           std::span<const CovariateProfile> covariates, const MatchOptions& options) {
  auto find = [&](const std::string& id) -> const CovariateProfile& {
    for (const auto& p : covariates)
      if (p.cluster == id) return p;
    throw Error(kModule, "missing covariate profile for cluster '" + id + "'");
  };
  for (const auto& t : treated)
    for (const auto& c : pool)
      if (t == c) throw Error(kModule, "cluster '" + t + "' is both treated and in the control pool");

  auto vec = [](const CovariateProfile& p) {
    return std::array<double, 3>{p.already_vaccinated_pct, p.excluded_pct, p.persuadable_pct};
  };
  std::array<double, 3> scale{1.0, 1.0, 1.0};
  if (options.standardize) {
    std::vector<std::array<double, 3>> all;
    for (const auto& id : treated) all.push_back(vec(find(id)));
    for (const auto& id : pool) all.push_back(vec(find(id)));
    for (std::size_t k = 0; k < 3 && all.size() > 1; ++k) {
      double mean = 0.0;
      for (const auto& v : all) mean += v[k];
      mean /= static_cast<double>(all.size());
      double ss = 0.0;
      for (const auto& v : all) ss += (v[k] - mean) * (v[k] - mean);
      const double sd = std::sqrt(ss / static_cast<double>(all.size() - 1));
      if (sd > 0.0) scale[k] = sd;
    }
  }

  MatchResult result;
  std::vector<bool> used(pool.size(), false);
  for (const auto& t : treated) {
    const auto tv = vec(find(t));
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> ties;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      if (used[j]) continue;
      const auto cv = vec(find(pool[j]));
      double d = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        const double diff = (tv[k] - cv[k]) / scale[k];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = j;
        ties.clear();
      } else if (d == best_d) {
        ties.push_back(j);
      }
    }
    if (!best) throw Error(kModule, "control pool exhausted before matching '" + t + "'");
    if (!ties.empty()) {
      std::string msg = "distance tie for '" + t + "' between '" + pool[*best] + "'";
      for (auto j : ties) msg += " and '" + pool[j] + "'";
      result.warnings.push_back(msg + "; kept the first in pool order");
    }
    if (!options.with_replacement) used[*best] = true;
    result.pairs.push_back({t, pool[*best], best_d});
  }
  return result;
}

}  // namespace swtte
