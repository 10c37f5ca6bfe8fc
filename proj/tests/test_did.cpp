#include "fixtures.hpp"
#include "oracles.hpp"

#include "swtte/cell_panel.hpp"
#include "swtte/did.hpp"
#include "swtte/error.hpp"
#include "swtte/sim.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace swtte;
using S = CellStatus;

namespace {

CellPanel simulated(const DesignSchematic& d, double delta, std::uint64_t seed, VarianceComponents vc,
                    bool covariates = true) {
  std::vector<double> means(d.n_periods());
  for (std::size_t j = 0; j < means.size(); ++j) means[j] = 3.4 - 0.2 * static_cast<double>(j);
  auto panel = generate_panel(d, vc, means, EffectProfile::constant(delta), seed);
  if (covariates) {
    std::vector<std::string> ids;
    for (const auto& r : d.rows()) ids.push_back(r.id);
    auto profiles = fixture::overlapping_profiles();
    std::erase_if(profiles, [&](const CovariateProfile& c) { return std::find(ids.begin(), ids.end(), c.cluster) == ids.end(); });
    if (profiles.size() != ids.size()) profiles = fixture::synthetic_profiles(ids);
    panel = panel.with_covariates(profiles);
  }
  return align_panel(panel, d);
}

}  // namespace

TEST_CASE("hand 2x2") {
  const auto d = DesignSchematic::from_grid({1, 2}, {"T", "C"}, {S::Control, S::Exposed, S::Control, S::Control});
  PanelDataset p({{"T", 1, 5.0}, {"T", 2, 8.0}, {"C", 1, 4.0}, {"C", 2, 5.0}});
  AttOptions o;
  o.mode = AdjustmentMode::Unadjusted;
  o.anticipation = 0;
  const auto g = estimate_att_gt(p, d, o);
  REQUIRE(g.entries.size() == 1);
  CHECK(g.entries[0].att == 2.0);
  CHECK(g.anchors.at(2) == 1);
}

TEST_CASE("unadjusted ATT equals a difference of means") {
  const auto a = fixture::design_a();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = simulated(a, 0.33, seed, fixture::vc_design1(), false);
    AttOptions o;
    o.mode = AdjustmentMode::Unadjusted;
    const auto g = estimate_att_gt(p, o);
    CHECK(g.entries.size() == 11 + 6 + 4 + 1);
    for (const auto& e : g.entries) CHECK(e.att == doctest::Approx(oracle::unadjusted_att(p, e.group, e.period)).epsilon(1e-13));
  }
}

TEST_CASE("modes coincide for a constant covariate") {
  const auto a = fixture::design_a();
  auto p = simulated(a, 0.33, 3, fixture::vc_design1());
  for (auto& c : p.covariates) c = {45.0, 60.0, 7.0};
  AttOptions o;
  o.mode = AdjustmentMode::Unadjusted;
  const auto base = estimate_att_gt(p, o);
  for (auto m : {AdjustmentMode::OutcomeRegression, AdjustmentMode::Ipw, AdjustmentMode::DoublyRobust}) {
    o.mode = m;
    const auto g = estimate_att_gt(p, o);
    REQUIRE(g.entries.size() == base.entries.size());
    for (std::size_t k = 0; k < g.entries.size(); ++k) CHECK(std::abs(g.entries[k].att - base.entries[k].att) < 1e-10);
  }
}

TEST_CASE("period and cluster shifts leave ATT unchanged") {
  const auto a = fixture::design_a();
  const auto p = simulated(a, 0.33, 4, fixture::vc_design1());
  auto q = p;
  for (std::size_t r = 0; r < q.n_rows(); ++r)
    for (std::size_t c = 0; c < q.n_cols(); ++c) q.y[r * q.n_cols() + c] += 0.7 * static_cast<double>(c) + 1.3 * static_cast<double>(r);
  for (auto m : {AdjustmentMode::Unadjusted, AdjustmentMode::OutcomeRegression, AdjustmentMode::Ipw,
                 AdjustmentMode::DoublyRobust}) {
    AttOptions o;
    o.mode = m;
    const auto g1 = estimate_att_gt(p, o);
    const auto g2 = estimate_att_gt(q, o);
    for (std::size_t k = 0; k < g1.entries.size(); ++k)
      CHECK(g1.entries[k].att == doctest::Approx(g2.entries[k].att).epsilon(1e-9));
  }
}

TEST_CASE("adjusted modes on a noiseless panel recover delta") {
  const auto a = fixture::design_a();
  const auto p = simulated(a, 0.33, 5, {0, 0});
  for (auto m : {AdjustmentMode::Unadjusted, AdjustmentMode::OutcomeRegression, AdjustmentMode::Ipw,
                 AdjustmentMode::DoublyRobust}) {
    DidSpec spec;
    spec.att.mode = m;
    CHECK(did_estimate(p, spec) == doctest::Approx(0.33).epsilon(1e-12));
  }
}

TEST_CASE("propensity separation is an error naming the cell") {
  const auto c = fixture::design_c();
  auto p = simulated(c, 0.33, 6, fixture::vc_design2());
  // treated OH far above all comparisons; IL/MI/MO serve as comparisons
  p.covariates[0] = {60.0, 90.0, 1.0};
  for (std::size_t r = 1; r < p.n_rows(); ++r) p.covariates[r] = {30.0 + r, 40.0 + r, 5.0};
  AttOptions o;
  o.mode = AdjustmentMode::Ipw;
  try {
    estimate_att_gt(p, o);
    FAIL("expected separation");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("separation") != std::string::npos);
  }
}

TEST_CASE("missing covariate and no controls") {
  const auto c = fixture::design_c();
  auto p = simulated(c, 0.33, 6, fixture::vc_design2());
  p.has_covariates[2] = false;
  AttOptions o;
  CHECK_THROWS_AS(estimate_att_gt(p, o), Error);
  // design C: MO at t=30 has no not-yet-treated comparison
  o.mode = AdjustmentMode::Unadjusted;
  CHECK_THROWS_AS(estimate_att_gt(p, o), Error);
  o.skip_inadmissible = true;
  const auto g = estimate_att_gt(p, o);
  for (const auto& e : g.entries) CHECK(e.group != 30);
}

TEST_CASE("aggregation arithmetic") {
  AttGrid g;
  g.entries = {{2, 2, 1.0, 1, 1, false}, {2, 3, 2.0, 1, 1, false}, {2, 4, 3.0, 1, 1, false}, {3, 3, 3.0, 1, 1, false}};
  g.group_sizes = {{2, 1}, {3, 3}};
  const auto r = aggregate_att(g, 3);
  CHECK(r.estimate == doctest::Approx(2.5));
  CHECK(r.warnings.size() == 1);
  CHECK(aggregate_att(g, 3, GroupWeighting::Size).estimate == doctest::Approx((2.0 + 3 * 3.0) / 4));
  AttGrid one;
  one.entries = {{5, 5, 0.7, 1, 1, false}, {5, 6, 9.0, 1, 1, false}};
  CHECK(aggregate_att(one, 1).estimate == doctest::Approx(0.7));
  CHECK_THROWS_AS(aggregate_att(AttGrid{}, 3), Error);
}

TEST_CASE("design A aggregation warns about MO") {
  const auto p = simulated(fixture::design_a(), 0.33, 7, fixture::vc_design1());
  DidSpec spec;
  const auto r = aggregate_att(estimate_att_gt(p, spec.att), 3);
  bool mo = false;
  for (const auto& w : r.warnings) mo = mo || w.find("group 30 has 1 of 3") != std::string::npos;
  CHECK(mo);
}

TEST_CASE("exposure-time profile aggregates to the mean of the first three effects") {
  // many clusters per group so the noise averages out
  std::vector<ClusterSequence> seqs;
  for (int i = 0; i < 120; ++i) {
    std::optional<int> ann;
    if (i % 4 == 0) ann = 5;
    if (i % 4 == 1) ann = 8;
    seqs.push_back({"c" + std::to_string(i), ann, 1});
  }
  const auto d = build_schematic(seqs, {1, 14}, 1);
  const std::vector<double> means(14, 2.0);
  const auto panel = generate_panel(d, {0.05, 0.05}, means,
                                    EffectProfile::by_exposure_time({0.6, 0.3, 0.0, 0, 0, 0, 0, 0, 0, 0, 0, 0}), 8);
  DidSpec spec;
  spec.att.mode = AdjustmentMode::Unadjusted;
  CHECK(did_estimate(align_panel(panel, d), spec) == doctest::Approx(0.3).epsilon(0.1));
}

TEST_CASE("bootstrap") {
  const auto a = fixture::design_a();
  DidSpec spec;
  spec.att.mode = AdjustmentMode::Unadjusted;
  SUBCASE("noiseless panel gives a zero-width interval") {
    const auto p = simulated(a, 0.33, 9, {0, 0});
    const auto r = cluster_bootstrap(p, spec, {200, 1, true});
    CHECK(r.ci_low == doctest::Approx(0.33));
    CHECK(r.ci_high == doctest::Approx(0.33));
    CHECK(r.se == doctest::Approx(0.0));
  }
  SUBCASE("B below 200 is rejected") {
    const auto p = simulated(a, 0.33, 9, fixture::vc_design1());
    CHECK_THROWS_AS(cluster_bootstrap(p, spec, {100, 1, true}), Error);
  }
  SUBCASE("parallel equals serial") {
    const auto p = simulated(a, 0.33, 10, fixture::vc_design1());
    const auto r1 = cluster_bootstrap(p, spec, {300, 5, true});
    const auto r2 = cluster_bootstrap(p, spec, {300, 5, false});
    CHECK(r1.ci_low == r2.ci_low);
    CHECK(r1.ci_high == r2.ci_high);
    CHECK(r1.se == r2.se);
    CHECK(r1.redraws == r2.redraws);
  }
}

TEST_CASE("placebo") {
  std::vector<ClusterSequence> seqs;
  for (int i = 0; i < 20; ++i) seqs.push_back({"c" + std::to_string(i), i < 6 ? std::optional<int>(8) : std::nullopt, 1});
  const auto d = build_schematic(seqs, {1, 12}, 1);
  AttOptions o;
  o.mode = AdjustmentMode::Unadjusted;
  SUBCASE("linear divergence grows toward the anchor") {
    auto p = simulated(d, 0.33, 11, {0, 0}, false);
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 0; c < p.n_cols(); ++c) p.y[r * p.n_cols() + c] += 0.1 * static_cast<double>(c);
    const auto g = estimate_pre_att(p, o);
    REQUIRE(g.entries.size() >= 2);
    for (std::size_t k = 1; k < g.entries.size(); ++k)
      CHECK(std::abs(g.entries[k].att) > std::abs(g.entries[k - 1].att));
  }
  SUBCASE("one pre-period is rejected") {
    std::vector<ClusterSequence> early = seqs;
    for (int i = 0; i < 6; ++i) early[static_cast<std::size_t>(i)].announcement = 3;
    const auto e = build_schematic(early, {1, 12}, 1);
    const auto p = simulated(e, 0.33, 12, {0.1, 0.1}, false);
    CHECK_THROWS_AS(placebo_pretrends(p, o, {200, 1, true}), Error);
  }
  SUBCASE("parallel trends usually pass") {
    const auto p = simulated(d, 0.33, 13, {0.1, 0.1}, false);
    const auto r = placebo_pretrends(p, o, {300, 2, true});
    CHECK(r.ci_low.size() == r.grid.entries.size());
    CHECK(r.summary.method == InferenceMethod::Placebo);
  }
}

TEST_CASE("quantile type 7") {
  CHECK(quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile({5}, 0.975) == 5);
  CHECK(quantile({1, 2, 3, 4, 5}, 0.25) == doctest::Approx(2.0));
}
