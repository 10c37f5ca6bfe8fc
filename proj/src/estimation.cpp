#include "swtte/estimation.hpp"

#include "swtte/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace swtte {
namespace {

const std::string kModule = "estimation";

}  // namespace

double TrendFit::mean(int period) const {
  const double t = period - origin;
  const double after = std::max(0, period - changepoint);
  double m = intercept + slope_pre * t + slope_change * after;
  if (mode == TrendMode::Segmented && period > changepoint) m += level_change;
  return m;
}

TrendFit fit_interrupted_trend(std::span<const PanelRecord> obs, int changepoint, TrendMode mode,
                               std::optional<int> origin) {
  if (obs.size() < 4) throw Error(kModule, "interrupted trend needs at least 4 observations");
  int first = std::numeric_limits<int>::max();
  bool before = false, after = false;
  for (const auto& r : obs) {
    first = std::min(first, r.period);
    (r.period <= changepoint ? before : after) = true;
  }
  if (!before || !after)
    throw Error(kModule, "rank deficient trend: observations lie on one side of changepoint " +
                             std::to_string(changepoint));

  TrendFit fit;
  fit.mode = mode;
  fit.origin = origin.value_or(first);
  fit.changepoint = changepoint;
  fit.n_obs = obs.size();

  const Eigen::Index cols = mode == TrendMode::Hinge ? 3 : 4;
  Eigen::MatrixXd X(static_cast<Eigen::Index>(obs.size()), cols);
  Eigen::VectorXd y(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const int t = obs[i].period;
    X(r, 0) = 1.0;
    X(r, 1) = t - fit.origin;
    X(r, 2) = std::max(0, t - changepoint);
    if (cols == 4) X(r, 3) = t > changepoint ? 1.0 : 0.0;
    y(r) = obs[i].outcome;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-12);
  if (qr.rank() < cols) throw Error(kModule, "rank deficient trend design");
  const Eigen::VectorXd b = qr.solve(y);
  fit.intercept = b(0);
  fit.slope_pre = b(1);
  fit.slope_change = b(2);
  if (cols == 4) fit.level_change = b(3);
  return fit;
}

VarianceComponents VarianceComponents::from_marginal(double marginal, double icc) {
  if (!(marginal > 0.0) || !(icc >= 0.0 && icc < 1.0))
    throw Error(kModule, "marginal variance must be > 0 and ICC in [0, 1)");
  return {marginal * icc, marginal * (1.0 - icc)};
}

void VarianceComponents::validate() const {
  if (!(tau2 >= 0.0) || !std::isfinite(tau2)) throw Error(kModule, "tau2 must be finite and >= 0");
  if (!(sigma2_resid > 0.0) || !std::isfinite(sigma2_resid))
    throw Error(kModule, "residual variance must be finite and > 0");
}

RandomInterceptModel::RandomInterceptModel(std::vector<ClusterBlock> blocks) : blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw Error(kModule, "model has no clusters");
  p_ = static_cast<std::size_t>(blocks_.front().X.cols());
  for (const auto& b : blocks_) {
    if (static_cast<std::size_t>(b.X.cols()) != p_ || b.X.rows() != b.y.size())
      throw Error(kModule, "inconsistent cluster block dimensions");
    n_ += static_cast<std::size_t>(b.y.size());
  }
  if (n_ <= p_) throw Error(kModule, "no residual degrees of freedom");

  Eigen::MatrixXd stacked(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(p_));
  Eigen::Index row = 0;
  for (const auto& b : blocks_) {
    stacked.middleRows(row, b.X.rows()) = b.X;
    row += b.X.rows();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(stacked);
  qr.setThreshold(1e-10);
  if (static_cast<std::size_t>(qr.rank()) < p_)
    throw Error(kModule, "fixed-effect design is rank deficient (rank " + std::to_string(qr.rank()) + " < " +
                             std::to_string(p_) + ")");

  sums_.reserve(blocks_.size());
  for (const auto& b : blocks_) {
    Summary s;
    s.xtx = b.X.transpose() * b.X;
    s.xsum = b.X.colwise().sum().transpose();
    s.xty = b.X.transpose() * b.y;
    s.ysum = b.y.sum();
    s.yty = b.y.squaredNorm();
    s.n = static_cast<double>(b.y.size());
    sums_.push_back(std::move(s));
  }
}

RandomInterceptModel::Profile RandomInterceptModel::profile(double lambda) const {
  const auto p = static_cast<Eigen::Index>(p_);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  double logdet_h = 0.0;
  for (const auto& s : sums_) {
    const double c = lambda / (1.0 + s.n * lambda);
    A += s.xtx;
    A.noalias() -= c * s.xsum * s.xsum.transpose();
    b += s.xty - c * s.ysum * s.xsum;
    logdet_h += std::log1p(s.n * lambda);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  if (llt.info() != Eigen::Success) throw Error(kModule, "X' H^-1 X is not positive definite");

  Profile out;
  out.beta = llt.solve(b);
  double rss = 0.0;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Eigen::VectorXd r = blocks_[i].y - blocks_[i].X * out.beta;
    const double c = lambda / (1.0 + sums_[i].n * lambda);
    const double rs = r.sum();
    rss += r.squaredNorm() - c * rs * rs;
  }
  out.rss = std::max(rss, 0.0);
  const double df = static_cast<double>(n_ - p_);
  out.sigma2 = out.rss / df;
  double logdet_a = 0.0;
  const Eigen::MatrixXd L = llt.matrixL();
  for (Eigen::Index k = 0; k < p; ++k) logdet_a += 2.0 * std::log(L(k, k));
  out.objective = df * std::log(out.sigma2) + logdet_h + logdet_a;
  out.xthx_inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
  return out;
}

VcFit RandomInterceptModel::fit_known(const VarianceComponents& vc) const {
  VcFit fit;
  if (vc.sigma2_resid == 0.0 && vc.tau2 == 0.0) {
    fit.lambda = 0.0;
  } else {
    vc.validate();
    fit.lambda = vc.tau2 / vc.sigma2_resid;
  }
  const auto prof = profile(fit.lambda);
  fit.vc = vc;
  fit.objective = prof.objective;
  fit.converged = true;
  fit.boundary = vc.tau2 == 0.0;
  fit.beta = prof.beta;
  fit.beta_cov = vc.sigma2_resid * prof.xthx_inv;
  return fit;
}

VcFit RandomInterceptModel::fit_reml(const RemlOptions& options) const {
  VcFit fit;

  // Zero residual variation after the fixed effects: nothing to split.
  {
    const auto at_zero = profile(0.0);
    double centred = 0.0;
    {
      double total = 0.0;
      for (const auto& b : blocks_) total += b.y.sum();
      const double mean = total / static_cast<double>(n_);
      for (const auto& b : blocks_) centred += (b.y.array() - mean).square().sum();
    }
    if (at_zero.rss <= 1e-20 * centred || centred == 0.0) {
      fit.vc = {0.0, 0.0};
      fit.lambda = 0.0;
      fit.converged = true;
      fit.boundary = true;
      fit.degenerate = true;
      fit.beta = at_zero.beta;
      fit.beta_cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p_), static_cast<Eigen::Index>(p_));
      fit.objective = -std::numeric_limits<double>::infinity();
      return fit;
    }
  }

  const double lo = std::log(options.lambda_min);
  const double hi = std::log(options.lambda_max);
  auto objective = [&](double u) { return profile(std::exp(u)).objective; };

  double best = std::numeric_limits<double>::infinity();
  double best_u = lo;
  auto record = [&](double u, double f) {
    if (f < best) {
      best = f;
      best_u = u;
    }
    fit.trace.push_back(best);
  };

  // Coarse scan to bracket the global minimum, then golden-section refinement.
  const int n_grid = std::max(3, options.grid_points);
  std::vector<double> us(static_cast<std::size_t>(n_grid));
  for (int k = 0; k < n_grid; ++k) {
    const double u = lo + (hi - lo) * k / (n_grid - 1);
    us[static_cast<std::size_t>(k)] = u;
    record(u, objective(u));
  }
  const auto kbest = static_cast<std::size_t>(
      std::find(us.begin(), us.end(), best_u) - us.begin());
  double a = us[kbest == 0 ? 0 : kbest - 1];
  double b = us[std::min(kbest + 1, us.size() - 1)];

  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = objective(c);
  double fd = objective(d);
  record(c, fc);
  record(d, fd);
  int it = 0;
  while (b - a > options.tolerance) {
    if (++it > options.max_iterations)
      throw Error(kModule, "REML did not converge within " + std::to_string(options.max_iterations) + " iterations");
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = objective(c);
      record(c, fc);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = objective(d);
      record(d, fd);
    }
  }
  fit.iterations = it;
  fit.converged = true;

  if (hi - best_u < 1e-6)
    throw Error(kModule, "REML did not converge: variance ratio at the upper bound " +
                             std::to_string(options.lambda_max));

  if (best_u - lo < 1e-6) {
    const auto at_zero = profile(0.0);
    fit.boundary = true;
    fit.lambda = 0.0;
    fit.vc = {0.0, at_zero.sigma2};
    fit.objective = at_zero.objective;
    fit.beta = at_zero.beta;
    fit.beta_cov = at_zero.sigma2 * at_zero.xthx_inv;
    return fit;
  }
  fit.lambda = std::exp(best_u);
  const auto prof = profile(fit.lambda);
  fit.vc = {fit.lambda * prof.sigma2, prof.sigma2};
  fit.objective = prof.objective;
  fit.beta = prof.beta;
  fit.beta_cov = prof.sigma2 * prof.xthx_inv;
  return fit;
}

std::vector<PanelRecord> control_observations(const PanelDataset& panel, const DesignSchematic& schematic) {
  std::vector<PanelRecord> out;
  for (std::size_t i = 0; i < schematic.n_clusters(); ++i)
    for (std::size_t j = 0; j < schematic.n_periods(); ++j) {
      if (schematic.at(i, j) != CellStatus::Control) continue;
      const auto& id = schematic.rows()[i].id;
      const int p = schematic.periods()[j];
      if (auto y = panel.outcome(id, p)) out.push_back({id, p, *y});
    }
  return out;
}

VcFit fit_variance_components(std::span<const PanelRecord> control_obs, const RemlOptions& options) {
  std::vector<std::string> clusters;
  std::map<std::string, std::vector<const PanelRecord*>> by_cluster;
  std::set<int> period_set;
  for (const auto& r : control_obs) {
    auto [it, inserted] = by_cluster.try_emplace(r.cluster);
    if (inserted) clusters.push_back(r.cluster);
    it->second.push_back(&r);
    period_set.insert(r.period);
  }
  if (clusters.size() < 2) throw Error(kModule, "variance components need at least 2 clusters");
  if (period_set.size() < 2) throw Error(kModule, "variance components need at least 2 periods");
  std::map<int, Eigen::Index> col;
  for (int p : period_set) col.emplace(p, static_cast<Eigen::Index>(col.size()));

  std::vector<ClusterBlock> blocks;
  blocks.reserve(clusters.size());
  for (const auto& id : clusters) {
    const auto& recs = by_cluster[id];
    ClusterBlock b;
    b.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(recs.size()), static_cast<Eigen::Index>(col.size()));
    b.y.resize(static_cast<Eigen::Index>(recs.size()));
    for (std::size_t k = 0; k < recs.size(); ++k) {
      b.X(static_cast<Eigen::Index>(k), col[recs[k]->period]) = 1.0;
      b.y(static_cast<Eigen::Index>(k)) = recs[k]->outcome;
    }
    blocks.push_back(std::move(b));
  }
  return RandomInterceptModel(std::move(blocks)).fit_reml(options);
}

}  // namespace swtte
