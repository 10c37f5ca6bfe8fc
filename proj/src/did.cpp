#include "swtte/did.hpp"

#include "swtte/error.hpp"
#include "swtte/normal.hpp"
#include "swtte/replicate.hpp"
#include "swtte/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace swtte {
namespace {

const std::string kModule = "did";

std::string cell_name(int g, int t) { return "(g=" + std::to_string(g) + ", t=" + std::to_string(t) + ")"; }

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool varies(const std::vector<double>& x) {
  if (x.size() < 2) return false;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *hi - *lo > 1e-12 * std::max(1.0, std::max(std::abs(*lo), std::abs(*hi)));
}

// Linear outcome model fitted on the comparison clusters.
struct OutcomeModel {
  double xbar = 0.0;
  double ybar = 0.0;
  double slope = 0.0;
  double operator()(double x) const { return ybar + slope * (x - xbar); }
};

OutcomeModel fit_outcome_model(const std::vector<double>& x, const std::vector<double>& d) {
  OutcomeModel m;
  m.xbar = mean(x);
  m.ybar = mean(d);
  if (!varies(x)) return m;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - m.xbar) * (d[k] - m.ybar);
    sxx += (x[k] - m.xbar) * (x[k] - m.xbar);
  }
  m.slope = sxy / sxx;
  return m;
}

// Odds p/(1-p) of group membership for each comparison cluster, from a
// logistic regression of membership on the covariate.
std::vector<double> propensity_odds(const std::vector<double>& xt, const std::vector<double>& xc, int g, int t) {
  std::vector<double> all(xt);
  all.insert(all.end(), xc.begin(), xc.end());
  if (!varies(all)) return std::vector<double>(xc.size(), 1.0);
  const auto [tlo, thi] = std::minmax_element(xt.begin(), xt.end());
  const auto [clo, chi] = std::minmax_element(xc.begin(), xc.end());
  if (*tlo >= *chi || *thi <= *clo)
    throw Error(kModule, "propensity separation at " + cell_name(g, t) +
                             ": the covariate perfectly predicts group membership");

  const double centre = mean(all);
  double scale = 0.0;
  for (double v : all) scale = std::max(scale, std::abs(v - centre));
  auto z = [&](double v) { return (v - centre) / scale; };

  double b0 = 0.0, b1 = 0.0;
  bool converged = false;
  for (int it = 0; it < 100 && !converged; ++it) {
    double g0 = 0.0, g1 = 0.0, h00 = 0.0, h01 = 0.0, h11 = 0.0;
    auto add = [&](double v, double y) {
      const double zi = z(v);
      const double p = 1.0 / (1.0 + std::exp(-(b0 + b1 * zi)));
      const double w = p * (1.0 - p);
      g0 += y - p;
      g1 += (y - p) * zi;
      h00 += w;
      h01 += w * zi;
      h11 += w * zi * zi;
    };
    for (double v : xt) add(v, 1.0);
    for (double v : xc) add(v, 0.0);
    const double det = h00 * h11 - h01 * h01;
    if (!(det > 0.0)) break;
    const double s0 = (h11 * g0 - h01 * g1) / det;
    const double s1 = (h00 * g1 - h01 * g0) / det;
    b0 += s0;
    b1 += s1;
    converged = std::abs(s0) + std::abs(s1) < 1e-10;
  }
  if (!converged) throw Error(kModule, "propensity model did not converge at " + cell_name(g, t));
  std::vector<double> odds;
  odds.reserve(xc.size());
  for (double v : xc) odds.push_back(std::exp(b0 + b1 * z(v)));
  return odds;
}

double adjusted_difference(const std::vector<double>& dt, const std::vector<double>& xt, const std::vector<double>& dc,
                           const std::vector<double>& xc, AdjustmentMode mode, int g, int t) {
  switch (mode) {
    case AdjustmentMode::Unadjusted: return mean(dt) - mean(dc);
    case AdjustmentMode::OutcomeRegression: {
      const auto m = fit_outcome_model(xc, dc);
      double s = 0.0;
      for (std::size_t k = 0; k < dt.size(); ++k) s += dt[k] - m(xt[k]);
      return s / static_cast<double>(dt.size());
    }
    case AdjustmentMode::Ipw: {
      const auto w = propensity_odds(xt, xc, g, t);
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < dc.size(); ++k) {
        num += w[k] * dc[k];
        den += w[k];
      }
      return mean(dt) - num / den;
    }
    case AdjustmentMode::DoublyRobust: {
      const auto m = fit_outcome_model(xc, dc);
      const auto w = propensity_odds(xt, xc, g, t);
      double treated = 0.0;
      for (std::size_t k = 0; k < dt.size(); ++k) treated += dt[k] - m(xt[k]);
      treated /= static_cast<double>(dt.size());
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < dc.size(); ++k) {
        num += w[k] * (dc[k] - m(xc[k]));
        den += w[k];
      }
      return treated - num / den;
    }
  }
  return 0.0;
}

struct Groups {
  std::map<std::size_t, std::vector<std::size_t>> by_col;  // first exposed col -> rows
  std::vector<std::optional<std::size_t>> first;           // per row
};

Groups find_groups(const CellPanel& p) {
  Groups g;
  g.first.resize(p.n_rows());
  for (std::size_t r = 0; r < p.n_rows(); ++r) {
    g.first[r] = p.first_exposed_col(r);
    if (g.first[r]) g.by_col[*g.first[r]].push_back(r);
  }
  return g;
}

// Computes one (g, t) contrast of Y_t - Y_base. `comparison_after` is the
// column after which a comparison cluster must still be unexposed once
// anticipation is added.
std::optional<AttEntry> contrast(const CellPanel& p, const Groups& groups, std::size_t gcol,
                                 const std::vector<std::size_t>& members, std::size_t tcol, std::size_t base,
                                 std::size_t comparison_after, CellStatus treated_status, const AttOptions& o,
                                 bool placebo) {
  const int g = p.periods[gcol];
  const int t = p.periods[tcol];
  std::vector<double> dt, xt, dc, xc;
  const bool adjust = o.mode != AdjustmentMode::Unadjusted;
  auto covariate = [&](std::size_t r) {
    if (!o.covariate) throw Error(kModule, "adjustment mode requires a covariate");
    auto v = p.covariate(r, *o.covariate);
    if (!v) throw Error(kModule, "covariate missing for cluster '" + p.ids[r] + "'");
    return *v;
  };
  for (auto r : members) {
    if (p.at(r, tcol) != treated_status || p.at(r, base) != CellStatus::Control) continue;
    if (!p.observed(r, tcol) || !p.observed(r, base)) continue;
    dt.push_back(p.value(r, tcol) - p.value(r, base));
    if (adjust) xt.push_back(covariate(r));
  }
  if (dt.empty()) return std::nullopt;
  const auto limit = static_cast<std::ptrdiff_t>(comparison_after) + o.anticipation;
  for (std::size_t r = 0; r < p.n_rows(); ++r) {
    const auto& f = groups.first[r];
    if (f && (*f == gcol || static_cast<std::ptrdiff_t>(*f) <= limit)) continue;
    if (p.at(r, tcol) != CellStatus::Control || p.at(r, base) != CellStatus::Control) continue;
    if (!p.observed(r, tcol) || !p.observed(r, base)) continue;
    dc.push_back(p.value(r, tcol) - p.value(r, base));
    if (adjust) xc.push_back(covariate(r));
  }
  if (dc.empty()) {
    if (o.skip_inadmissible) return std::nullopt;
    throw Error(kModule, "no admissible comparison clusters at " + cell_name(g, t));
  }
  AttEntry e;
  e.group = g;
  e.period = t;
  e.att = adjusted_difference(dt, xt, dc, xc, o.mode, g, t);
  e.n_treated = dt.size();
  e.n_control = dc.size();
  e.placebo = placebo;
  return e;
}

std::size_t anchor_col(const CellPanel& p, std::size_t gcol, const std::vector<std::size_t>& members,
                       int anticipation) {
  const int g = p.periods[gcol];
  const auto a = static_cast<std::ptrdiff_t>(gcol) - 1 - anticipation;
  if (a < 0) throw Error(kModule, "group " + std::to_string(g) + ": anchor period precedes the study start");
  const auto ac = static_cast<std::size_t>(a);
  for (auto r : members)
    if (p.at(r, ac) != CellStatus::Control)
      throw Error(kModule, "group " + std::to_string(g) + ": anchor period " + std::to_string(p.periods[ac]) +
                               " is not a control cell for '" + p.ids[r] + "'");
  return ac;
}

AttGrid grid_skeleton(const Groups& groups, const CellPanel& p, const AttOptions& o) {
  if (o.anticipation < 0) throw Error(kModule, "anticipation must be nonnegative");
  AttGrid grid;
  grid.anticipation = o.anticipation;
  for (const auto& [gcol, members] : groups.by_col) {
    const int g = p.periods[gcol];
    grid.group_sizes[g] = members.size();
    if (members.size() < 2)
      grid.warnings.push_back("group " + std::to_string(g) + " has " + std::to_string(members.size()) +
                              " treated cluster; inference relies on cluster bootstrap or permutation");
  }
  return grid;
}

}  // namespace

std::string_view to_string(AdjustmentMode m) {
  switch (m) {
    case AdjustmentMode::Unadjusted: return "unadjusted";
    case AdjustmentMode::OutcomeRegression: return "outcome_regression";
    case AdjustmentMode::Ipw: return "ipw";
    case AdjustmentMode::DoublyRobust: return "doubly_robust";
  }
  return "?";
}

AdjustmentMode parse_adjustment_mode(std::string_view s) {
  if (s == "unadjusted") return AdjustmentMode::Unadjusted;
  if (s == "outcome_regression") return AdjustmentMode::OutcomeRegression;
  if (s == "ipw") return AdjustmentMode::Ipw;
  if (s == "doubly_robust") return AdjustmentMode::DoublyRobust;
  throw Error(kModule, "unknown mode '" + std::string(s) + "'");
}

std::string_view to_string(GroupWeighting w) { return w == GroupWeighting::Equal ? "equal" : "size"; }

std::string_view to_string(InferenceMethod m) {
  switch (m) {
    case InferenceMethod::None: return "none";
    case InferenceMethod::Model: return "model";
    case InferenceMethod::ClusterBootstrap: return "cluster_bootstrap";
    case InferenceMethod::Permutation: return "permutation";
    case InferenceMethod::Placebo: return "placebo";
  }
  return "?";
}

AttGrid estimate_att_gt(const PanelDataset& panel, const DesignSchematic& schematic, const AttOptions& options) {
  return estimate_att_gt(align_panel(panel, schematic), options);
}

AttGrid estimate_att_gt(const CellPanel& p, const AttOptions& o) {
  const auto groups = find_groups(p);
  AttGrid grid = grid_skeleton(groups, p, o);
  for (const auto& [gcol, members] : groups.by_col) {
    const auto ac = anchor_col(p, gcol, members, o.anticipation);
    grid.anchors[p.periods[gcol]] = p.periods[ac];
    for (std::size_t t = gcol; t < p.n_cols(); ++t)
      if (auto e = contrast(p, groups, gcol, members, t, ac, t, CellStatus::Exposed, o, false))
        grid.entries.push_back(*e);
  }
  return grid;
}

AttGrid estimate_pre_att(const CellPanel& p, const AttOptions& o) {
  const auto groups = find_groups(p);
  AttGrid grid = grid_skeleton(groups, p, o);
  for (const auto& [gcol, members] : groups.by_col) {
    const auto ac = anchor_col(p, gcol, members, o.anticipation);
    grid.anchors[p.periods[gcol]] = p.periods[ac];
    if (ac < 2)
      throw Error(kModule, "group " + std::to_string(p.periods[gcol]) +
                               ": placebo test needs at least 2 pre-periods before the anchor");
    for (std::size_t t = 1; t < ac; ++t)
      if (auto e = contrast(p, groups, gcol, members, t, 0, ac, CellStatus::Control, o, true))
        grid.entries.push_back(*e);
  }
  return grid;
}

InferenceResult aggregate_att(const AttGrid& grid, int horizon, GroupWeighting weighting) {
  if (horizon < 1) throw Error(kModule, "horizon must be >= 1");
  std::map<int, std::vector<double>> post;
  for (const auto& e : grid.entries)
    if (!e.placebo && e.period >= e.group) post[e.group].push_back(e.att);  // entries are period-ordered
  if (post.empty()) throw Error(kModule, "ATT grid has no post-adoption entries");

  InferenceResult out;
  out.warnings = grid.warnings;
  double num = 0.0, den = 0.0;
  for (auto& [g, atts] : post) {
    const auto used = std::min<std::size_t>(atts.size(), static_cast<std::size_t>(horizon));
    if (atts.size() < static_cast<std::size_t>(horizon))
      out.warnings.push_back("group " + std::to_string(g) + " has " + std::to_string(atts.size()) + " of " +
                             std::to_string(horizon) + " post-adoption periods; averaged over those available");
    const double gm = std::accumulate(atts.begin(), atts.begin() + static_cast<std::ptrdiff_t>(used), 0.0) /
                      static_cast<double>(used);
    double w = 1.0;
    if (weighting == GroupWeighting::Size) {
      auto it = grid.group_sizes.find(g);
      w = it == grid.group_sizes.end() ? 1.0 : static_cast<double>(it->second);
    }
    num += w * gm;
    den += w;
  }
  out.estimate = num / den;
  return out;
}

double did_estimate(const CellPanel& panel, const DidSpec& spec) {
  return aggregate_att(estimate_att_gt(panel, spec.att), spec.horizon, spec.weighting).estimate;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return InferenceResult::kNaN;
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

namespace {

template <class Stat>
struct Resampled {
  Stat value{};
  std::size_t redraws = 0;
  bool ok = false;
};

// Draws cluster resamples for replicate `b` until `stat` succeeds; each
// replicate owns a derived RNG stream.
template <class Stat, class Fn>
Resampled<Stat> resample(const CellPanel& p, std::uint64_t seed, std::size_t b, Fn&& stat) {
  Resampled<Stat> out;
  auto rng = make_rng(seed, b);
  std::uniform_int_distribution<std::size_t> pick(0, p.n_rows() - 1);
  std::vector<std::size_t> rows(p.n_rows());
  for (int attempt = 0; attempt < 100; ++attempt) {
    for (auto& r : rows) r = pick(rng);
    try {
      out.value = stat(select_rows(p, rows));
      out.ok = true;
      return out;
    } catch (const Error&) {
      ++out.redraws;
    }
  }
  return out;
}

void check_degenerate(std::size_t redraws, std::size_t replicates) {
  const double frac = static_cast<double>(redraws) / static_cast<double>(redraws + replicates);
  if (frac > 0.2)
    throw Error(kModule, std::to_string(redraws) + " degenerate bootstrap resamples (" +
                             std::to_string(static_cast<int>(std::round(100 * frac))) +
                             "% of draws); design too fragile for the cluster bootstrap");
}

}  // namespace

InferenceResult cluster_bootstrap(const PanelDataset& panel, const DesignSchematic& schematic, const DidSpec& spec,
                                  const BootstrapOptions& options) {
  return cluster_bootstrap(align_panel(panel, schematic), spec, options);
}

InferenceResult cluster_bootstrap(const CellPanel& p, const DidSpec& spec, const BootstrapOptions& options) {
  if (options.replicates < 200) throw Error(kModule, "cluster bootstrap needs B >= 200");
  if (p.n_rows() < 2) throw Error(kModule, "cluster bootstrap needs at least 2 clusters");
  const auto point_grid = estimate_att_gt(p, spec.att);
  InferenceResult out = aggregate_att(point_grid, spec.horizon, spec.weighting);

  const auto reps = run_replicates(options.replicates, options.parallel, [&](std::size_t b) {
    return resample<double>(p, options.seed, b, [&](const CellPanel& s) { return did_estimate(s, spec); });
  });
  std::vector<double> values;
  values.reserve(reps.size());
  for (const auto& r : reps) {
    out.redraws += r.redraws;
    if (r.ok) values.push_back(r.value);
  }
  check_degenerate(out.redraws, options.replicates);
  if (values.size() < options.replicates) throw Error(kModule, "bootstrap replicate exhausted its redraw budget");

  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  out.se = std::sqrt(ss / static_cast<double>(values.size() - 1));
  out.ci_low = quantile(values, 0.025);
  out.ci_high = quantile(values, 0.975);
  out.p_value = out.se > 0.0 ? 2.0 * normal_cdf(-std::abs(out.estimate) / out.se) : (out.estimate == 0.0 ? 1.0 : 0.0);
  out.method = InferenceMethod::ClusterBootstrap;
  out.replicates = options.replicates;
  out.seed = options.seed;
  if (out.redraws > 0)
    out.warnings.push_back(std::to_string(out.redraws) + " degenerate resamples were redrawn");
  return out;
}

PlaceboResult placebo_pretrends(const PanelDataset& panel, const DesignSchematic& schematic,
                                const AttOptions& options, const BootstrapOptions& bootstrap) {
  return placebo_pretrends(align_panel(panel, schematic), options, bootstrap);
}

PlaceboResult placebo_pretrends(const CellPanel& p, const AttOptions& options, const BootstrapOptions& bootstrap) {
  if (bootstrap.replicates < 200) throw Error(kModule, "placebo bootstrap needs B >= 200");
  PlaceboResult out;
  out.grid = estimate_pre_att(p, options);
  if (out.grid.entries.empty()) throw Error(kModule, "no pre-period placebo entries could be formed");

  using Key = std::pair<int, int>;
  using Values = std::map<Key, double>;
  const auto reps = run_replicates(bootstrap.replicates, bootstrap.parallel, [&](std::size_t b) {
    return resample<Values>(p, bootstrap.seed, b, [&](const CellPanel& s) {
      Values v;
      for (const auto& e : estimate_pre_att(s, options).entries) v[{e.group, e.period}] = e.att;
      if (v.empty()) throw Error(kModule, "empty placebo resample");
      return v;
    });
  });
  std::map<Key, std::vector<double>> draws;
  for (const auto& r : reps) {
    out.summary.redraws += r.redraws;
    if (!r.ok) continue;
    for (const auto& [k, v] : r.value) draws[k].push_back(v);
  }
  check_degenerate(out.summary.redraws, bootstrap.replicates);

  out.pass = true;
  double max_abs = 0.0;
  for (const auto& e : out.grid.entries) {
    const auto& d = draws[{e.group, e.period}];
    const double lo = quantile(d, 0.025);
    const double hi = quantile(d, 0.975);
    out.ci_low.push_back(lo);
    out.ci_high.push_back(hi);
    if (!(lo <= 0.0 && 0.0 <= hi)) out.pass = false;
    max_abs = std::max(max_abs, std::abs(e.att));
  }
  out.summary.estimate = max_abs;
  out.summary.method = InferenceMethod::Placebo;
  out.summary.replicates = bootstrap.replicates;
  out.summary.seed = bootstrap.seed;
  out.summary.warnings = out.grid.warnings;
  out.summary.warnings.push_back("placebo entries are pre-period ATT(g, t) against the first study period; "
                                 "per-entry 95% intervals without multiplicity correction");
  return out;
}

}  // namespace swtte
