#pragma once

#include "swtte/design.hpp"
#include "swtte/panel.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace swtte {

enum class TrendMode {
  Hinge,      // continuous; slope changes by slope_change after the changepoint
  Segmented,  // free second segment with its own level jump
};

/// Piecewise-linear mean of the control outcome over time.
struct TrendFit {
  TrendMode mode = TrendMode::Hinge;
  int origin = 0;       // period at which `intercept` applies
  int changepoint = 0;  // last period of the first segment
  double intercept = 0.0;
  double slope_pre = 0.0;
  double slope_change = 0.0;
  double level_change = 0.0;  // Segmented only
  std::size_t n_obs = 0;

  double mean(int period) const;
};

/// OLS of outcome on {1, t - origin, max(0, t - changepoint)} (plus a step
/// 1{t > changepoint} in Segmented mode). `origin` defaults to the earliest
/// observed period.
TrendFit fit_interrupted_trend(std::span<const PanelRecord> obs, int changepoint,
                               TrendMode mode = TrendMode::Hinge, std::optional<int> origin = std::nullopt);

struct VarianceComponents {
  double tau2 = 0.0;          // between-cluster
  double sigma2_resid = 0.0;  // within-cluster residual

  double marginal() const { return tau2 + sigma2_resid; }
  double icc() const { return marginal() > 0.0 ? tau2 / marginal() : 0.0; }

  /// From the marginal variance and ICC (the "sigma2"/"alpha1" pair).
  static VarianceComponents from_marginal(double marginal, double icc);
  /// Throws unless tau2 >= 0 and sigma2_resid > 0.
  void validate() const;
};

struct RemlOptions {
  double lambda_min = 1e-8;
  double lambda_max = 1e6;
  double tolerance = 1e-9;  // on log(lambda)
  int max_iterations = 500;
  int grid_points = 64;
};

struct VcFit {
  VarianceComponents vc;
  double lambda = 0.0;     // tau2 / sigma2
  double objective = 0.0;  // -2 * restricted log-likelihood, up to a constant
  bool converged = false;
  bool boundary = false;    // tau2 estimated at zero
  bool degenerate = false;  // zero residual variation: both components are zero
  int iterations = 0;
  std::vector<double> trace;  // best objective after each optimizer step
  Eigen::VectorXd beta;
  Eigen::MatrixXd beta_cov;  // sigma2 * (X' H^-1 X)^-1
};

/// One cluster's fixed-effect rows and outcomes.
struct ClusterBlock {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

/// Linear model y_i = X_i b + a_i 1 + e_i with a_i ~ N(0, tau2), e_i ~ N(0,
/// sigma2). Covariances are handled per cluster through the rank-one inverse
/// H_i^-1 = I - lambda / (1 + n_i lambda) J, so each likelihood evaluation is
/// a p x p factorisation.
class RandomInterceptModel {
 public:
  explicit RandomInterceptModel(std::vector<ClusterBlock> blocks);

  struct Profile {
    double objective = 0.0;
    double sigma2 = 0.0;
    double rss = 0.0;  // y' H^-1 y - b' X' H^-1 y
    Eigen::VectorXd beta;
    Eigen::MatrixXd xthx_inv;  // (X' H^-1 X)^-1
  };

  /// REML profile at fixed lambda: sigma2 = rss / (N - p).
  Profile profile(double lambda) const;
  VcFit fit_reml(const RemlOptions& options = {}) const;
  /// GLS at known components; beta_cov is exact.
  VcFit fit_known(const VarianceComponents& vc) const;

  std::size_t n_obs() const { return n_; }
  std::size_t n_params() const { return p_; }
  std::size_t n_clusters() const { return blocks_.size(); }

 private:
  struct Summary {
    Eigen::MatrixXd xtx;
    Eigen::VectorXd xsum;
    Eigen::VectorXd xty;
    double ysum = 0.0;
    double yty = 0.0;
    double n = 0.0;
  };
  std::vector<ClusterBlock> blocks_;
  std::vector<Summary> sums_;
  std::size_t n_ = 0;
  std::size_t p_ = 0;
};

/// Cells with status Control that have an observed outcome.
std::vector<PanelRecord> control_observations(const PanelDataset& panel, const DesignSchematic& schematic);

/// REML for Y_ij = beta_j + alpha_i + e_ij with categorical period effects.
VcFit fit_variance_components(std::span<const PanelRecord> control_obs, const RemlOptions& options = {});

}  // namespace swtte
