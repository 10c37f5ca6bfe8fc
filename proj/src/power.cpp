#include "swtte/power.hpp"

#include "swtte/error.hpp"
#include "swtte/normal.hpp"
#include "swtte/replicate.hpp"
#include "swtte/sim.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace swtte {
namespace {

const std::string kModule = "power";

// Column layout shared by the known-variance estimator and the REML refit:
// one column per observed period plus the treatment indicator.
struct DesignColumns {
  std::vector<Eigen::Index> period_col;  // -1 when the period has no cells
  Eigen::Index n_periods = 0;
};

DesignColumns observed_periods(const DesignSchematic& s) {
  DesignColumns dc;
  dc.period_col.assign(s.n_periods(), -1);
  for (std::size_t j = 0; j < s.n_periods(); ++j) {
    bool any = false;
    for (std::size_t i = 0; i < s.n_clusters() && !any; ++i) any = s.at(i, j) != CellStatus::Absent;
    if (any) dc.period_col[j] = dc.n_periods++;
  }
  return dc;
}

}  // namespace

std::string_view to_string(ExcludedPolicy p) {
  switch (p) {
    case ExcludedPolicy::Drop: return "drop";
    case ExcludedPolicy::AsControl: return "as_control";
    case ExcludedPolicy::AsExposed: return "as_exposed";
  }
  return "?";
}

ExcludedPolicy parse_excluded_policy(std::string_view s) {
  if (s == "drop") return ExcludedPolicy::Drop;
  if (s == "as_control") return ExcludedPolicy::AsControl;
  if (s == "as_exposed") return ExcludedPolicy::AsExposed;
  throw Error(kModule, "unknown excluded policy '" + std::string(s) + "' (drop|as_control|as_exposed)");
}

std::string_view to_string(PowerMethod m) { return m == PowerMethod::Analytic ? "analytic" : "simulated"; }

DesignSchematic apply_excluded_policy(const DesignSchematic& schematic, ExcludedPolicy policy) {
  const CellStatus to = policy == ExcludedPolicy::Drop        ? CellStatus::Absent
                        : policy == ExcludedPolicy::AsControl ? CellStatus::Control
                                                              : CellStatus::Exposed;
  auto grid = schematic.grid();
  std::replace(grid.begin(), grid.end(), CellStatus::Excluded, to);
  std::vector<std::string> ids;
  for (const auto& r : schematic.rows()) ids.push_back(r.id);
  auto out = DesignSchematic::from_grid(schematic.periods(), std::move(ids), std::move(grid));
  out.require_positivity();
  return out;
}

GlsTreatmentEstimator::GlsTreatmentEstimator(const DesignSchematic& s, const VarianceComponents& vc) {
  vc.validate();
  s.require_positivity();
  const std::size_t I = s.n_clusters();
  const std::size_t T = s.n_periods();
  const auto dc = observed_periods(s);
  // intercept, period dummies for all observed periods but the first, treatment
  const Eigen::Index p = dc.n_periods + 1;
  const Eigen::Index theta = p - 1;

  auto fill_row = [&](std::size_t i, std::size_t j, Eigen::MatrixXd& z, Eigen::Index r) {
    z.row(r).setZero();
    z(r, 0) = 1.0;
    if (dc.period_col[j] > 0) z(r, dc.period_col[j]) = 1.0;
    z(r, theta) = s.exposed(i, j) ? 1.0 : 0.0;
  };

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(p, p);
  std::vector<Eigen::MatrixXd> Z(I);
  std::vector<double> c(I, 0.0);
  for (std::size_t i = 0; i < I; ++i) {
    std::size_t n = 0;
    for (std::size_t j = 0; j < T; ++j) {
      if (s.at(i, j) == CellStatus::Excluded)
        throw Error(kModule, "apply an excluded-cell policy before GLS estimation");
      n += s.at(i, j) != CellStatus::Absent;
    }
    Z[i].resize(static_cast<Eigen::Index>(n), p);
    Eigen::Index r = 0;
    for (std::size_t j = 0; j < T; ++j)
      if (s.at(i, j) != CellStatus::Absent) fill_row(i, j, Z[i], r++);
    if (n == 0) continue;
    c[i] = vc.tau2 / (vc.sigma2_resid + static_cast<double>(n) * vc.tau2);
    const Eigen::VectorXd sum = Z[i].colwise().sum().transpose();
    M += (Z[i].transpose() * Z[i] - c[i] * sum * sum.transpose()) / vc.sigma2_resid;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
  qr.setThreshold(1e-10);
  if (qr.rank() < p)
    throw Error(kModule, "singular information matrix: treatment effect not identified "
                         "(e.g. treatment collinear with period effects)");
  Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
  e(theta) = 1.0;
  const Eigen::VectorXd g = qr.solve(e);
  variance_ = g(theta);
  if (!(variance_ > 0.0) || !std::isfinite(variance_))
    throw Error(kModule, "singular information matrix: non-positive treatment variance");

  weights_.assign(I * T, 0.0);
  for (std::size_t i = 0; i < I; ++i) {
    if (Z[i].rows() == 0) continue;
    const Eigen::VectorXd zg = Z[i] * g;
    const double total = zg.sum();
    Eigen::Index r = 0;
    for (std::size_t j = 0; j < T; ++j)
      if (s.at(i, j) != CellStatus::Absent)
        weights_[i * T + j] = (zg(r++) - c[i] * total) / vc.sigma2_resid;
  }
}

double GlsTreatmentEstimator::estimate(std::span<const double> y) const {
  if (y.size() != weights_.size()) throw Error(kModule, "outcome vector does not match the design grid");
  double est = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k)
    if (weights_[k] != 0.0) est += weights_[k] * y[k];
  return est;
}

double gls_treatment_variance(const DesignSchematic& schematic, const VarianceComponents& vc,
                              ExcludedPolicy policy) {
  return GlsTreatmentEstimator(apply_excluded_policy(schematic, policy), vc).variance();
}

double closed_form_treatment_variance(const DesignSchematic& schematic, const VarianceComponents& vc) {
  vc.validate();
  const auto cnt = schematic.counts();
  if (cnt.excluded != 0 || cnt.absent != 0)
    throw Error(kModule, "closed form requires a complete grid without excluded or absent cells");
  const double I = static_cast<double>(schematic.n_clusters());
  const double T = static_cast<double>(schematic.n_periods());
  double U = 0.0, W = 0.0, V = 0.0;
  for (std::size_t j = 0; j < schematic.n_periods(); ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < schematic.n_clusters(); ++i) col += schematic.exposed(i, j);
    U += col;
    W += col * col;
  }
  for (std::size_t i = 0; i < schematic.n_clusters(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < schematic.n_periods(); ++j) row += schematic.exposed(i, j);
    V += row * row;
  }
  const double s2 = vc.sigma2_resid;
  const double t2 = vc.tau2;
  const double denom = (I * U - W) * s2 + (U * U + I * T * U - T * W - I * V) * t2;
  if (!(denom > 0.0)) throw Error(kModule, "singular information matrix (closed form denominator <= 0)");
  return I * s2 * (s2 + T * t2) / denom;
}

void PowerSpec::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(kModule, "alpha must lie in (0, 1)");
  if (!std::isfinite(delta)) throw Error(kModule, "delta must be finite");
  vc.validate();
}

PowerResult analytic_power(const DesignSchematic& schematic, const PowerSpec& spec, ExcludedPolicy policy,
                           bool exact_two_sided) {
  spec.validate();
  PowerResult r;
  r.method = PowerMethod::Analytic;
  r.policy = policy;
  r.variance = gls_treatment_variance(schematic, spec.vc, policy);
  r.se = std::sqrt(r.variance);
  const double z = normal_quantile(1.0 - spec.alpha / 2.0);
  const double shift = std::abs(spec.delta) / r.se;
  r.power = normal_cdf(shift - z);
  if (exact_two_sided) r.power += normal_cdf(-shift - z);
  return r;
}

PowerResult simulated_power(const DesignSchematic& schematic, const PowerSpec& spec, const TrendFit& trend,
                            ExcludedPolicy policy, const SimulationOptions& options) {
  spec.validate();
  if (options.n_sims < 100) throw Error(kModule, "simulated power needs n_sims >= 100");
  const auto design = apply_excluded_policy(schematic, policy);
  const auto means = period_means_from_trend(design, trend);
  const auto effect = EffectProfile::constant(spec.delta);
  const double z = normal_quantile(1.0 - spec.alpha / 2.0);
  const std::size_t T = design.n_periods();

  std::optional<GlsTreatmentEstimator> known;
  if (!options.reestimate_vc) known.emplace(design, spec.vc);
  const auto dc = observed_periods(design);

  struct Rep {
    bool ok = false;
    bool reject = false;
    double estimate = 0.0;
  };
  auto replicate = [&](std::size_t k) {
    Rep rep;
    auto rng = make_rng(options.seed, k);
    const auto y = generate_outcomes(design, spec.vc, means, effect, rng);
    if (known) {
      rep.estimate = known->estimate(y);
      rep.reject = std::abs(rep.estimate) / std::sqrt(known->variance()) >= z;
      rep.ok = true;
      return rep;
    }
    std::vector<ClusterBlock> blocks;
    const Eigen::Index p = dc.n_periods + 1;
    for (std::size_t i = 0; i < design.n_clusters(); ++i) {
      std::vector<std::size_t> cols;
      for (std::size_t j = 0; j < T; ++j)
        if (design.at(i, j) != CellStatus::Absent) cols.push_back(j);
      if (cols.empty()) continue;
      ClusterBlock b;
      b.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cols.size()), p);
      b.y.resize(static_cast<Eigen::Index>(cols.size()));
      for (std::size_t r = 0; r < cols.size(); ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        b.X(row, dc.period_col[cols[r]]) = 1.0;
        b.X(row, p - 1) = design.exposed(i, cols[r]) ? 1.0 : 0.0;
        b.y(row) = y[i * T + cols[r]];
      }
      blocks.push_back(std::move(b));
    }
    try {
      const auto fit = RandomInterceptModel(std::move(blocks)).fit_reml();
      rep.estimate = fit.beta(p - 1);
      const double se = std::sqrt(fit.beta_cov(p - 1, p - 1));
      rep.reject = std::abs(rep.estimate) / se >= z;
      rep.ok = std::isfinite(se) && se > 0.0;
    } catch (const Error&) {
      rep.ok = false;
    }
    return rep;
  };
  const auto reps = run_replicates(options.n_sims, options.parallel, replicate);

  PowerResult r;
  r.method = PowerMethod::Simulated;
  r.policy = policy;
  r.n_sims = options.n_sims;
  r.seed = options.seed;
  std::size_t ok = 0, rejects = 0;
  double sum = 0.0;
  for (const auto& rep : reps) {
    if (!rep.ok) continue;
    ++ok;
    rejects += rep.reject;
    sum += rep.estimate;
  }
  r.failures = reps.size() - ok;
  if (static_cast<double>(r.failures) > 0.01 * static_cast<double>(reps.size()))
    throw Error(kModule, std::to_string(r.failures) + " of " + std::to_string(reps.size()) +
                             " replicate fits failed (more than 1%)");
  r.power = static_cast<double>(rejects) / static_cast<double>(ok);
  r.mc_se = std::sqrt(r.power * (1.0 - r.power) / static_cast<double>(ok));
  r.mean_estimate = sum / static_cast<double>(ok);
  r.variance = gls_treatment_variance(schematic, spec.vc, policy);
  r.se = std::sqrt(r.variance);
  return r;
}

Calibration calibrate_excluded(std::span<const CalibrationTarget> targets, double tolerance) {
  Calibration cal;
  cal.tolerance = tolerance;
  double best = std::numeric_limits<double>::infinity();
  for (auto policy : kAllExcludedPolicies) {
    CalibrationRow row;
    row.policy = policy;
    bool computable = true;
    for (const auto& t : targets) {
      double pw = std::numeric_limits<double>::quiet_NaN();
      try {
        pw = analytic_power(t.schematic, t.spec, policy).power;
      } catch (const Error&) {
        computable = false;
      }
      row.powers.push_back(pw);
      if (std::isfinite(pw)) row.max_abs_error = std::max(row.max_abs_error, std::abs(pw - t.target_power));
    }
    if (!computable) row.max_abs_error = std::numeric_limits<double>::infinity();
    row.within_tolerance = computable && row.max_abs_error <= tolerance;
    if (row.within_tolerance && row.max_abs_error < best) {
      best = row.max_abs_error;
      cal.selected = policy;
    }
    cal.rows.push_back(std::move(row));
  }
  return cal;
}

}  // namespace swtte
