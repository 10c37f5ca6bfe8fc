#include "swtte/trial.hpp"

#include "swtte/error.hpp"
#include "swtte/normal.hpp"
#include "swtte/replicate.hpp"
#include "swtte/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace swtte {
namespace {

const std::string kModule = "trial";

using Sequence = std::pair<std::optional<int>, int>;

}  // namespace

TrialFit fit_trial_mixed_model(const PanelDataset& panel, const DesignSchematic& schematic,
                               const TrialOptions& options) {
  return fit_trial_mixed_model(align_panel(panel, schematic), options);
}

TrialFit fit_trial_mixed_model(const CellPanel& p, const TrialOptions& o) {
  if (o.horizon < 1) throw Error(kModule, "horizon must be >= 1");
  const std::size_t T = p.n_cols();
  bool any_exposed = false, any_control = false;

  // Included cells and their exposure times.
  std::vector<std::vector<std::pair<std::size_t, int>>> cells(p.n_rows());
  std::vector<bool> period_used(T, false);
  int max_k = 0;
  for (std::size_t r = 0; r < p.n_rows(); ++r) {
    int k = 0;
    for (std::size_t c = 0; c < T; ++c) {
      const auto s = p.at(r, c);
      if (s == CellStatus::Exposed) ++k;
      if (s != CellStatus::Control && s != CellStatus::Exposed) continue;
      if (!p.observed(r, c)) continue;
      const int kt = s == CellStatus::Exposed ? k : 0;
      cells[r].emplace_back(c, kt);
      period_used[c] = true;
      max_k = std::max(max_k, kt);
      (kt > 0 ? any_exposed : any_control) = true;
    }
  }
  if (!any_exposed || !any_control) throw Error(kModule, "positivity violated: need exposed and control cells");

  std::vector<std::size_t> n_at(static_cast<std::size_t>(max_k) + 1, 0);
  for (const auto& row : cells)
    for (const auto& [c, k] : row) ++n_at[static_cast<std::size_t>(k)];
  for (int k = 1; k <= o.horizon; ++k)
    if (k > max_k || n_at[static_cast<std::size_t>(k)] == 0)
      throw Error(kModule, "exposure time " + std::to_string(k) + " has no cells; theta_" + std::to_string(k) +
                               " is not identified");

  // intercept | period dummies (all used periods but the first) | theta_1..theta_K
  std::vector<Eigen::Index> pcol(T, -1);
  Eigen::Index next = 1;
  bool first = true;
  for (std::size_t c = 0; c < T; ++c) {
    if (!period_used[c]) continue;
    if (first) {
      first = false;
      continue;
    }
    pcol[c] = next++;
  }
  const Eigen::Index theta0 = next;
  const Eigen::Index np = theta0 + max_k;

  std::vector<ClusterBlock> blocks;
  for (std::size_t r = 0; r < p.n_rows(); ++r) {
    if (cells[r].empty()) continue;
    ClusterBlock b;
    b.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cells[r].size()), np);
    b.y.resize(static_cast<Eigen::Index>(cells[r].size()));
    for (std::size_t m = 0; m < cells[r].size(); ++m) {
      const auto [c, k] = cells[r][m];
      const auto row = static_cast<Eigen::Index>(m);
      b.X(row, 0) = 1.0;
      if (pcol[c] > 0) b.X(row, pcol[c]) = 1.0;
      if (k > 0) b.X(row, theta0 + k - 1) = 1.0;
      b.y(row) = p.value(r, c);
    }
    blocks.push_back(std::move(b));
  }

  RandomInterceptModel model(std::move(blocks));
  TrialFit fit;
  fit.variance = o.vc ? model.fit_known(*o.vc) : model.fit_reml(o.reml);

  Eigen::VectorXd contrast = Eigen::VectorXd::Zero(np);
  for (int k = 1; k <= o.horizon; ++k) contrast(theta0 + k - 1) = 1.0 / o.horizon;
  const double est = contrast.dot(fit.variance.beta);
  const double var = contrast.dot(fit.variance.beta_cov * contrast);
  const double se = std::sqrt(std::max(var, 0.0));

  for (int k = 1; k <= max_k; ++k) {
    const auto idx = theta0 + k - 1;
    fit.effects.push_back({k, fit.variance.beta(idx), std::sqrt(std::max(fit.variance.beta_cov(idx, idx), 0.0)),
                           n_at[static_cast<std::size_t>(k)]});
  }

  auto& res = fit.result;
  res.estimate = est;
  res.se = se;
  const double z = normal_quantile(0.975);
  res.ci_low = est - z * se;
  res.ci_high = est + z * se;
  res.p_value = se > 0.0 ? 2.0 * normal_cdf(-std::abs(est) / se) : (est == 0.0 ? 1.0 : 0.0);
  res.method = InferenceMethod::Model;
  fit.notes.push_back("cluster-period random effects are not identifiable with one observation per cell; "
                      "they are absorbed into the residual variance");
  if (fit.variance.boundary) fit.notes.push_back("between-cluster variance estimated at the boundary (tau2 = 0)");
  return fit;
}

std::string describe(const EstimatorSpec& spec) {
  if (const auto* d = std::get_if<DidSpec>(&spec))
    return "did_att_gt[" + std::string(to_string(d->att.mode)) + ", horizon " + std::to_string(d->horizon) + "]";
  const auto& t = std::get<TrialOptions>(spec);
  return "trial_mixed_model[horizon " + std::to_string(t.horizon) + (t.vc ? ", known vc]" : ", reml]");
}

double evaluate_estimator(const EstimatorSpec& spec, const CellPanel& panel) {
  if (const auto* d = std::get_if<DidSpec>(&spec)) return did_estimate(panel, *d);
  return fit_trial_mixed_model(panel, std::get<TrialOptions>(spec)).result.estimate;
}

std::uint64_t count_assignments(const CellPanel& p) {
  std::map<Sequence, std::uint64_t> mult;
  for (std::size_t r = 0; r < p.n_rows(); ++r) ++mult[{p.announcement[r], p.n_excluded[r]}];
  // n! / prod(m_k!) built as a product of binomials
  std::uint64_t total = 1;
  std::uint64_t placed = 0;
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  for (const auto& [seq, m] : mult) {
    for (std::uint64_t j = 1; j <= m; ++j) {
      // total *= (placed + j) / j, exact because C(placed + j, j) is integral
      const std::uint64_t num = placed + j;
      const std::uint64_t g = std::gcd(total, j);
      const std::uint64_t t = total / g;
      const std::uint64_t d = j / g;
      if (t > kMax / num) return kMax;
      total = t * num / d;
    }
    placed += m;
  }
  return total;
}

InferenceResult permutation_test(const PanelDataset& panel, const DesignSchematic& schematic,
                                 const EstimatorSpec& spec, const PermutationOptions& options) {
  return permutation_test(align_panel(panel, schematic), spec, options);
}

InferenceResult permutation_test(const CellPanel& p, const EstimatorSpec& spec, const PermutationOptions& options) {
  std::map<Sequence, std::size_t> classes;
  std::vector<std::size_t> cls(p.n_rows());
  std::vector<std::size_t> representative;
  for (std::size_t r = 0; r < p.n_rows(); ++r) {
    auto [it, inserted] = classes.try_emplace({p.announcement[r], p.n_excluded[r]}, representative.size());
    if (inserted) representative.push_back(r);
    cls[r] = it->second;
  }
  if (classes.size() < 2) throw Error(kModule, "permutation test needs at least 2 distinct adoption sequences");

  InferenceResult out;
  out.method = InferenceMethod::Permutation;
  out.seed = options.seed;
  out.estimate = evaluate_estimator(spec, p);
  const double obs = std::abs(out.estimate);
  const double tol = 1e-10 * std::max(1.0, obs);

  auto statistic = [&](const std::vector<std::size_t>& assignment) -> std::optional<double> {
    std::vector<std::size_t> source(p.n_rows());
    for (std::size_t r = 0; r < p.n_rows(); ++r) source[r] = representative[assignment[r]];
    try {
      return evaluate_estimator(spec, reassign_sequences(p, source));
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  PermutationMode mode = options.mode;
  const auto n_assign = count_assignments(p);
  if (mode == PermutationMode::Exhaustive && n_assign > kMaxExhaustiveAssignments) {
    out.warnings.push_back(std::to_string(n_assign) + " assignments exceed the exhaustive limit; sampled instead");
    mode = PermutationMode::Sampled;
  }

  std::vector<std::optional<double>> stats;
  if (mode == PermutationMode::Exhaustive) {
    std::vector<std::vector<std::size_t>> all;
    std::vector<std::size_t> a(cls);
    std::sort(a.begin(), a.end());
    do all.push_back(a);
    while (std::next_permutation(a.begin(), a.end()));
    stats = run_replicates(all.size(), options.parallel, [&](std::size_t k) { return statistic(all[k]); });
  } else {
    if (options.n_perms < 1) throw Error(kModule, "n_perms must be >= 1");
    stats = run_replicates(options.n_perms, options.parallel, [&](std::size_t k) {
      auto rng = make_rng(options.seed, k);
      auto a = cls;
      std::shuffle(a.begin(), a.end(), rng);
      return statistic(a);
    });
  }

  std::size_t valid = 0, extreme = 0;
  for (const auto& s : stats) {
    if (!s) continue;
    ++valid;
    if (std::abs(*s) >= obs - tol) ++extreme;
  }
  if (valid == 0) throw Error(kModule, "estimator failed on every permuted assignment");
  if (valid < stats.size())
    out.warnings.push_back(std::to_string(stats.size() - valid) + " permuted assignments could not be estimated");
  out.replicates = valid;
  out.p_value = mode == PermutationMode::Exhaustive
                    ? static_cast<double>(extreme) / static_cast<double>(valid)
                    : static_cast<double>(1 + extreme) / static_cast<double>(1 + valid);
  return out;
}

}  // namespace swtte
