#include "fixtures.hpp"

#include "swtte/cell_panel.hpp"
#include "swtte/error.hpp"
#include "swtte/sim.hpp"
#include "swtte/trial.hpp"

#include <doctest.h>

#include <cmath>

using namespace swtte;

namespace {

CellPanel make(const DesignSchematic& d, const EffectProfile& effect, VarianceComponents vc, std::uint64_t seed) {
  std::vector<double> means(d.n_periods());
  for (std::size_t j = 0; j < means.size(); ++j) means[j] = 3.0 - 0.15 * static_cast<double>(j);
  return align_panel(generate_panel(d, vc, means, effect, seed), d);
}

}  // namespace

TEST_CASE("noiseless exposure-time recovery") {
  const auto a = fixture::design_a();
  const auto effect = EffectProfile::by_exposure_time({0.5, 0.3, 0.1, 0, 0, 0, 0, 0, 0, 0, 0});
  const auto p = make(a, effect, {0, 0}, 1);
  const auto fit = fit_trial_mixed_model(p);
  CHECK(fit.result.estimate == doctest::Approx(0.3).epsilon(1e-10));
  CHECK(fit.result.se == doctest::Approx(0.0));
  REQUIRE(fit.effects.size() >= 3);
  CHECK(fit.effects[0].estimate == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(fit.effects[1].estimate == doctest::Approx(0.3).epsilon(1e-10));
  CHECK(fit.effects[2].estimate == doctest::Approx(0.1).epsilon(1e-10));
  CHECK_FALSE(fit.notes.empty());

  TrialOptions known;
  known.vc = VarianceComponents{0.1, 0.2};
  CHECK(fit_trial_mixed_model(p, known).result.estimate == doctest::Approx(0.3).epsilon(1e-10));
}

TEST_CASE("MO contributes only exposure time 1") {
  const auto a = fixture::design_a();
  const auto p = make(a, EffectProfile::constant(0.33), fixture::vc_design1(), 2);
  const auto fit = fit_trial_mixed_model(p);
  REQUIRE(fit.effects.size() == 11);
  CHECK(fit.effects[0].n_cells == 4);  // OH, IL, MI, MO
  CHECK(fit.effects[1].n_cells == 3);
  CHECK(fit.effects[4].n_cells == 2);  // OH and IL reach 5
  CHECK(std::isfinite(fit.result.se));
}

TEST_CASE("unidentified contrast") {
  const auto c = fixture::design_c();
  const auto p = make(c, EffectProfile::constant(0.33), fixture::vc_design2(), 3);
  TrialOptions o;
  o.horizon = 12;
  CHECK_THROWS_AS(fit_trial_mixed_model(p, o), Error);
}

TEST_CASE("assignment counts") {
  const auto a = fixture::design_a();
  const auto p = make(a, EffectProfile::constant(0.0), {0.1, 0.1}, 4);
  CHECK(count_assignments(p) == 12ull * 11 * 10 * 9);  // 12! / 8!
  const auto c = make(fixture::design_c(), EffectProfile::constant(0.0), {0.1, 0.1}, 4);
  CHECK(count_assignments(c) == 24u);
}

TEST_CASE("exhaustive permutation enumerates 4! assignments") {
  const auto c = make(fixture::design_c(), EffectProfile::constant(0.33), {0.1, 0.1}, 5);
  TrialOptions spec;
  spec.horizon = 1;
  spec.vc = VarianceComponents{0.1, 0.1};
  const auto r = permutation_test(c, spec, {0, 0, PermutationMode::Exhaustive, true});
  CHECK(r.replicates == 24u);
  const double scaled = r.p_value * 24.0;
  CHECK(std::abs(scaled - std::round(scaled)) < 1e-9);
  CHECK(r.p_value >= 1.0 / 24.0);
}

TEST_CASE("sampled permutation floor") {
  // ten clusters with distinct sequences and a huge effect: the observed
  // assignment is the most extreme one
  std::vector<ClusterSequence> seqs;
  for (int i = 0; i < 10; ++i) seqs.push_back({"c" + std::to_string(i), i < 9 ? std::optional<int>(3 + i) : std::nullopt, 0});
  const auto d = build_schematic(seqs, {1, 14}, 0);
  std::vector<double> means(14, 1.0);
  const auto panel = generate_panel(d, {0.01, 0.01}, means, EffectProfile::constant(50.0), 6);
  DidSpec spec;
  spec.att.mode = AdjustmentMode::Unadjusted;
  spec.att.anticipation = 0;
  spec.horizon = 1;
  spec.att.skip_inadmissible = true;
  const auto r = permutation_test(align_panel(panel, d), spec, {199, 7, PermutationMode::Sampled, true});
  CHECK(r.p_value == doctest::Approx(1.0 / 200.0));
}

TEST_CASE("permutation preconditions and determinism") {
  std::vector<ClusterSequence> same{{"A", 3, 0}, {"B", 3, 0}};
  const auto d = build_schematic(same, {1, 5}, 0);
  auto p = make(d, EffectProfile::constant(0.0), {0.1, 0.1}, 8);
  // both clusters share one sequence
  CHECK_THROWS_AS(permutation_test(p, TrialOptions{}, {100, 1, PermutationMode::Sampled, true}), Error);

  const auto a = make(fixture::design_a(), EffectProfile::constant(0.0), fixture::vc_design1(), 9);
  DidSpec spec;
  spec.att.mode = AdjustmentMode::Unadjusted;
  const auto r1 = permutation_test(a, spec, {99, 3, PermutationMode::Sampled, true});
  const auto r2 = permutation_test(a, spec, {99, 3, PermutationMode::Sampled, false});
  CHECK(r1.p_value == r2.p_value);
  CHECK(describe(spec).find("unadjusted") != std::string::npos);
}

TEST_CASE("trial model and equal-weight DID agree in expectation") {
  const auto a = fixture::design_a();
  TrialOptions t;
  t.horizon = 11;  // every exposure time in design A
  t.vc = fixture::vc_design1();
  DidSpec d;
  d.att.mode = AdjustmentMode::Unadjusted;
  d.horizon = 11;
  double trial = 0, did = 0;
  const int reps = 400;
  for (int k = 0; k < reps; ++k) {
    const auto p = make(a, EffectProfile::constant(0.33), fixture::vc_design1(), derive_seed(71, k));
    trial += fit_trial_mixed_model(p, t).result.estimate;
    did += did_estimate(p, d);
  }
  CHECK(std::abs(trial / reps - did / reps) <= 0.02);
}
