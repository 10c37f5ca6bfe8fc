// Serial reference vs OpenMP replicate runner on the Monte Carlo kernels.
// Outputs are identical by construction; only wall time differs.

#include "swtte/cell_panel.hpp"
#include "swtte/did.hpp"
#include "swtte/power.hpp"
#include "swtte/replicate.hpp"
#include "swtte/sim.hpp"
#include "swtte/trial.hpp"

#include <benchmark/benchmark.h>

using namespace swtte;

namespace {

DesignSchematic midwest() {
  std::vector<ClusterSequence> seqs;
  const char* ids[] = {"OH", "IL", "MI", "MO", "IA", "IN", "KS", "MN", "ND", "NE", "SD", "WI"};
  const int weeks[] = {19, 24, 26, 29};
  for (int i = 0; i < 12; ++i) {
    ClusterSequence s{ids[i], std::nullopt, 1};
    if (i < 4) s.announcement = weeks[i];
    seqs.push_back(s);
  }
  return build_schematic(seqs, {15, 30}, 1);
}

const PowerSpec kSpec{0.33, VarianceComponents::from_marginal(0.26, 0.39), 0.05};

TrendFit flat() {
  TrendFit t;
  t.origin = 15;
  t.changepoint = 20;
  t.intercept = 3.39;
  return t;
}

void BM_SimulatedPower(benchmark::State& state) {
  const auto d = midwest();
  SimulationOptions o{static_cast<std::size_t>(state.range(1)), 7, true, state.range(0) != 0};
  for (auto _ : state) benchmark::DoNotOptimize(simulated_power(d, kSpec, flat(), ExcludedPolicy::AsExposed, o).power);
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

CellPanel panel() {
  const auto d = midwest();
  std::vector<double> means(d.n_periods(), 3.0);
  return align_panel(generate_panel(d, kSpec.vc, means, EffectProfile::constant(0.33), 9), d);
}

void BM_ClusterBootstrap(benchmark::State& state) {
  const auto p = panel();
  DidSpec spec;
  spec.att.mode = AdjustmentMode::Unadjusted;
  spec.att.covariate.reset();
  BootstrapOptions o{static_cast<std::size_t>(state.range(1)), 7, state.range(0) != 0};
  for (auto _ : state) benchmark::DoNotOptimize(cluster_bootstrap(p, spec, o).se);
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

void BM_TrialPermutation(benchmark::State& state) {
  const auto p = panel();
  PermutationOptions o{static_cast<std::size_t>(state.range(1)), 7, PermutationMode::Sampled, state.range(0) != 0};
  for (auto _ : state) benchmark::DoNotOptimize(permutation_test(p, TrialOptions{}, o).p_value);
  state.SetItemsProcessed(state.iterations() * state.range(1));
}

}  // namespace

// first arg: 0 serial, 1 OpenMP
BENCHMARK(BM_SimulatedPower)->ArgNames({"parallel", "sims"})->ArgsProduct({{0, 1}, {1000}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ClusterBootstrap)->ArgNames({"parallel", "B"})->ArgsProduct({{0, 1}, {1000}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrialPermutation)->ArgNames({"parallel", "perms"})->ArgsProduct({{0, 1}, {200}})->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  benchmark::Initialize(&argc, argv);
  benchmark::AddCustomContext("omp_threads", std::to_string(max_threads()));
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
}
