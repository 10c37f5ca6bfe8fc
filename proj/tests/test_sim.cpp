#include "fixtures.hpp"

#include "swtte/error.hpp"
#include "swtte/replicate.hpp"
#include "swtte/sim.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace swtte;

TEST_CASE("noiseless constant effect") {
  const auto a = fixture::design_a();
  const std::vector<double> means(16, 1.0);
  const auto p = generate_panel(a, {0, 0}, means, EffectProfile::constant(0.33), 9);
  CHECK(p.outcome("OH", 20) == doctest::Approx(1.33));
  CHECK(p.outcome("OH", 19) == doctest::Approx(1.0));  // excluded week: no effect
  CHECK(p.outcome("IA", 30) == doctest::Approx(1.0));
  CHECK(p.size() == 192);
}

TEST_CASE("exposure-time profile") {
  const auto c = fixture::design_c();
  const std::vector<double> means(16, 2.0);
  const auto effect = EffectProfile::by_exposure_time({0.5, 0.3, 0.1, 0.0, 0, 0, 0, 0, 0, 0, 0});
  const auto p = generate_panel(c, {0, 0}, means, effect, 1);
  CHECK(p.outcome("IL", 25) == doctest::Approx(2.5));
  CHECK(p.outcome("IL", 26) == doctest::Approx(2.3));
  CHECK(p.outcome("IL", 27) == doctest::Approx(2.1));
  const auto short_effect = EffectProfile::by_exposure_time({0.5});
  CHECK_THROWS_AS(generate_panel(c, {0, 0}, means, short_effect, 1), Error);
}

TEST_CASE("seed determinism") {
  const auto a = fixture::design_a();
  const std::vector<double> means(16, 1.0);
  const auto vc = fixture::vc_design1();
  const auto p1 = generate_panel(a, vc, means, EffectProfile::constant(0.33), 77);
  const auto p2 = generate_panel(a, vc, means, EffectProfile::constant(0.33), 77);
  const auto p3 = generate_panel(a, vc, means, EffectProfile::constant(0.33), 78);
  CHECK(p1.records() == p2.records());
  CHECK_FALSE(p1.records() == p3.records());
  CHECK_THROWS_AS(generate_panel(a, vc, std::vector<double>(15, 1.0), EffectProfile::constant(0), 1), Error);
}

TEST_CASE("moments over many replicates") {
  const auto a = fixture::design_a();
  std::vector<double> means(16);
  for (std::size_t j = 0; j < 16; ++j) means[j] = 3.0 - 0.1 * static_cast<double>(j);
  const auto vc = fixture::vc_design1();
  const std::size_t n = 10000;
  const auto cols = a.n_periods();
  const auto ia = *a.row_of("IA");
  struct Draw {
    double cell = 0, cluster_mean = 0, other = 0, exposed = 0;
  };
  const auto draws = run_replicates_parallel(n, [&](std::size_t i) {
    auto rng = make_rng(5, i);
    const auto y = generate_outcomes(a, vc, means, EffectProfile::constant(0.0), rng);
    Draw d;
    d.cell = y[ia * cols + 3];
    for (std::size_t j = 0; j < cols; ++j) d.cluster_mean += y[ia * cols + j] - means[j];
    d.cluster_mean /= static_cast<double>(cols);
    d.exposed = y[*a.row_of("OH") * cols + 10] - means[10];
    d.other = y[*a.row_of("IN") * cols + 10] - means[10];
    return d;
  });
  double m = 0, cm = 0, cm2 = 0;
  for (const auto& d : draws) {
    m += d.cell;
    cm += d.cluster_mean;
    cm2 += d.cluster_mean * d.cluster_mean;
  }
  m /= n;
  const double mc_se = std::sqrt(vc.marginal() / n);
  CHECK(std::abs(m - means[3]) < 3 * mc_se);
  cm /= n;
  const double var_cm = cm2 / n - cm * cm;
  const double expect = vc.tau2 + vc.sigma2_resid / static_cast<double>(cols);
  CHECK(std::abs(var_cm / expect - 1) < 0.05);

  // with zero effect the exposed cell matches a control cell in distribution
  double e1 = 0, e2 = 0, o1 = 0, o2 = 0;
  for (const auto& d : draws) {
    e1 += d.exposed;
    e2 += d.exposed * d.exposed;
    o1 += d.other;
    o2 += d.other * d.other;
  }
  CHECK(std::abs(e1 / n - o1 / n) < 4 * std::sqrt(2 * vc.marginal() / n));
  CHECK(std::abs((e2 / n) / (o2 / n) - 1) < 0.06);

  // consecutive replicate streams are uncorrelated
  double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i + 1 < n; i += 2) {
    const double x = draws[i].cell, yv = draws[i + 1].cell;
    sx += x;
    sy += yv;
    sxy += x * yv;
    sxx += x * x;
    syy += yv * yv;
  }
  const double k = n / 2.0;
  const double r = (sxy / k - sx / k * sy / k) /
                   std::sqrt((sxx / k - sx * sx / k / k) * (syy / k - sy * sy / k / k));
  CHECK(std::abs(r) < 4 / std::sqrt(k));
}

TEST_CASE("serial and parallel runners agree") {
  auto fn = [](std::size_t i) {
    auto rng = make_rng(3, i);
    return std::normal_distribution<double>()(rng);
  };
  CHECK(run_replicates_serial(257, fn) == run_replicates_parallel(257, fn));
  CHECK_THROWS_AS(run_replicates_parallel(10,
                                          [](std::size_t i) -> int {
                                            if (i == 3) throw Error("sim", "boom");
                                            return 0;
                                          }),
                  Error);
}
