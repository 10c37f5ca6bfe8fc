#include "fixtures.hpp"
#include "oracles.hpp"

#include "swtte/error.hpp"
#include "swtte/normal.hpp"
#include "swtte/power.hpp"
#include "swtte/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace swtte;
using S = CellStatus;

namespace {

DesignSchematic two_by_two(S a, S b, S c, S d) { return DesignSchematic::from_grid({1, 2}, {"A", "B"}, {a, b, c, d}); }

DesignSchematic random_complete(Rng& rng, std::size_t I, std::size_t T) {
  // random staggered adoption; at least one cluster exposed, one period all-control
  std::uniform_int_distribution<std::size_t> start(1, T);
  std::vector<int> periods;
  for (std::size_t j = 0; j < T; ++j) periods.push_back(static_cast<int>(j) + 1);
  std::vector<std::string> ids;
  std::vector<S> grid;
  for (std::size_t i = 0; i < I; ++i) {
    ids.push_back("c" + std::to_string(i));
    const std::size_t s = i == 0 ? 1 : (i == 1 ? T : start(rng));  // c1 never exposed
    for (std::size_t j = 0; j < T; ++j) grid.push_back(i == 1 ? S::Control : (j >= s ? S::Exposed : S::Control));
  }
  return DesignSchematic::from_grid(periods, ids, grid);
}

}  // namespace

TEST_CASE("2x2 variances") {
  const auto d = two_by_two(S::Control, S::Exposed, S::Control, S::Control);
  CHECK(gls_treatment_variance(d, {0.0, 1.0}, ExcludedPolicy::Drop) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(gls_treatment_variance(d, {1.0, 1.0}, ExcludedPolicy::Drop) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(closed_form_treatment_variance(d, {1.0, 1.0}) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(oracle::dense_gls_variance(d, {1.0, 1.0}) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("simultaneous adoption is singular") {
  const auto d = two_by_two(S::Control, S::Exposed, S::Control, S::Exposed);
  CHECK_THROWS_AS(gls_treatment_variance(d, {1.0, 1.0}, ExcludedPolicy::Drop), Error);
}

TEST_CASE("closed form, accumulated GLS and dense oracle agree") {
  Rng rng(derive_seed(1, 0));
  std::uniform_int_distribution<std::size_t> ni(2, 12), nt(2, 16);
  std::uniform_real_distribution<double> v(0.05, 2.0);
  for (int rep = 0; rep < 100; ++rep) {
    const auto d = random_complete(rng, ni(rng), nt(rng));
    const VarianceComponents vc{v(rng), v(rng)};
    const double g = gls_treatment_variance(d, vc, ExcludedPolicy::Drop);
    CHECK(std::abs(g / closed_form_treatment_variance(d, vc) - 1) < 1e-10);
    CHECK(std::abs(g / oracle::dense_gls_variance(d, vc) - 1) < 1e-9);
  }
}

TEST_CASE("drop policy matches the dense oracle on unequal period counts") {
  for (auto d : {fixture::design_a(), fixture::design_b(), fixture::design_c()}) {
    const auto dropped = apply_excluded_policy(d, ExcludedPolicy::Drop);
    const auto vc = fixture::vc_design2();
    CHECK(gls_treatment_variance(d, vc, ExcludedPolicy::Drop) ==
          doctest::Approx(oracle::dense_gls_variance(dropped, vc)).epsilon(1e-10));
  }
}

TEST_CASE("variance invariances") {
  const auto a = fixture::design_a();
  const auto vc = fixture::vc_design1();
  const double base = gls_treatment_variance(a, vc, ExcludedPolicy::AsExposed);
  // reversed row order
  std::vector<std::string> ids;
  for (auto it = a.rows().rbegin(); it != a.rows().rend(); ++it) ids.push_back(it->id);
  std::vector<S> grid;
  for (const auto& id : ids) {
    const auto r = a.row(*a.row_of(id));
    grid.insert(grid.end(), r.begin(), r.end());
  }
  const auto rev = DesignSchematic::from_grid(a.periods(), ids, grid);
  CHECK(gls_treatment_variance(rev, vc, ExcludedPolicy::AsExposed) == doctest::Approx(base).epsilon(1e-12));
  // period relabel
  std::vector<int> shifted;
  for (int p : a.periods()) shifted.push_back(p + 100);
  const auto rel = DesignSchematic::from_grid(shifted, ids, grid);
  CHECK(gls_treatment_variance(rel, vc, ExcludedPolicy::AsExposed) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("adding a cluster never increases variance") {
  Rng rng(derive_seed(2, 0));
  const auto vc = fixture::vc_design1();
  const auto c = fixture::design_c();
  double prev = gls_treatment_variance(c, vc, ExcludedPolicy::Drop);
  const auto a = fixture::design_a();
  std::vector<std::string> keep = fixture::kDesignC;
  for (const auto& id : fixture::kMidwest) {
    if (std::find(keep.begin(), keep.end(), id) != keep.end()) continue;
    keep.push_back(id);
    const double v = gls_treatment_variance(restrict_clusters(a, keep), vc, ExcludedPolicy::Drop);
    CHECK(v <= prev * (1 + 1e-12));
    prev = v;
  }
}

TEST_CASE("analytic power conventions") {
  const auto a = fixture::design_a();
  const auto vc = fixture::vc_design1();
  const double se = std::sqrt(gls_treatment_variance(a, vc, ExcludedPolicy::AsExposed));
  const double z = normal_quantile(0.975);
  PowerSpec half{z * se, vc, 0.05};
  CHECK(analytic_power(a, half, ExcludedPolicy::AsExposed).power == doctest::Approx(0.5).epsilon(1e-12));
  PowerSpec zero{0.0, vc, 0.05};
  CHECK(analytic_power(a, zero, ExcludedPolicy::AsExposed).power == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(analytic_power(a, zero, ExcludedPolicy::AsExposed, true).power == doctest::Approx(0.05).epsilon(1e-12));

  // monotone in |delta|; scale invariance
  double last = 0;
  for (double d : {0.05, 0.1, 0.2, 0.33, 0.5}) {
    const double p = analytic_power(a, {d, vc, 0.05}, ExcludedPolicy::AsExposed).power;
    CHECK(p > last);
    last = p;
  }
  const double p0 = analytic_power(a, {0.33, vc, 0.05}, ExcludedPolicy::AsExposed).power;
  const VarianceComponents scaled{vc.tau2 * 4, vc.sigma2_resid * 4};
  CHECK(analytic_power(a, {0.66, scaled, 0.05}, ExcludedPolicy::AsExposed).power ==
        doctest::Approx(p0).epsilon(1e-12));
  CHECK_THROWS_AS(analytic_power(a, {0.33, vc, 1.5}, ExcludedPolicy::AsExposed), Error);
}

TEST_CASE("table targets under the calibrated policy") {
  std::vector<CalibrationTarget> t{{"A", fixture::design_a(), {fixture::kDelta, fixture::vc_design1(), 0.05}, 0.78},
                                   {"B", fixture::design_b(), {fixture::kDelta, fixture::vc_design2(), 0.05}, 0.61},
                                   {"C", fixture::design_c(), {fixture::kDelta, fixture::vc_design2(), 0.05}, 0.38}};
  const auto cal = calibrate_excluded(t);
  REQUIRE(cal.selected.has_value());
  CHECK(*cal.selected == ExcludedPolicy::AsExposed);
  CHECK(cal.rows.size() == 3);
  for (const auto& r : cal.rows)
    if (r.policy == ExcludedPolicy::AsExposed) CHECK(r.max_abs_error <= 0.02);
}

TEST_CASE("simulated power preconditions and determinism") {
  const auto c = fixture::design_c();
  PowerSpec spec{fixture::kDelta, fixture::vc_design2(), 0.05};
  TrendFit trend;
  trend.intercept = 3.39;
  trend.origin = 15;
  trend.changepoint = 20;
  SimulationOptions o{50, 1, false, true};
  CHECK_THROWS_AS(simulated_power(c, spec, trend, ExcludedPolicy::AsExposed, o), Error);
  o.n_sims = 200;
  const auto p1 = simulated_power(c, spec, trend, ExcludedPolicy::AsExposed, o);
  o.parallel = false;
  const auto p2 = simulated_power(c, spec, trend, ExcludedPolicy::AsExposed, o);
  CHECK(p1.power == p2.power);
  CHECK(p1.mean_estimate == p2.mean_estimate);
  CHECK(p1.n_sims == 200u);
  o.reestimate_vc = true;
  const auto p3 = simulated_power(c, spec, trend, ExcludedPolicy::AsExposed, o);
  CHECK(p3.failures <= 2u);
  CHECK(p3.power >= 0.0);
}
