#include <benchmark/benchmark.h>

#include "fusion/engine.hpp"
#include "fusion/kernel.hpp"
#include "fusion/seed.hpp"
#include "fusion/simulation.hpp"

using namespace fusion;

namespace {

Dataset bench_data(int n) {
  return generate_dataset(make_scenario("moderately_aligned", Shift::none, n), 1, 0);
}

void BM_KernelPredict(benchmark::State& state, Exec exec) {
  Dataset data = bench_data(static_cast<int>(state.range(0)));
  RowMatrix x = prefix_rows(data, 2);
  Eigen::VectorXd y = data.Z().col(2);
  RegressionFit f = fit_kernel_regression(x, y, BandwidthRule::silverman());
  for (auto _ : state) benchmark::DoNotOptimize(f.predict(x, exec));
  state.SetItemsProcessed(state.iterations() * x.rows());
}

void BM_Gradients(benchmark::State& state, Exec exec) {
  Dataset data = bench_data(static_cast<int>(state.range(0)));
  FusionDesign d = simulation_design();
  BetaParam b = zero_beta(d);
  b.values.setConstant(-0.5);
  NuisanceOptions opt;
  opt.grid_points = 100;
  FittedNuisance nu = fit_nuisance_bundle(data, d, b, simulation_estimand(), opt);
  GradientSeed seed = seed_gradient(nu);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_gradients(nu, &seed, data, exec));
  state.SetItemsProcessed(state.iterations() * data.n());
}

}  // namespace

BENCHMARK_CAPTURE(BM_KernelPredict, serial, Exec::serial)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_KernelPredict, parallel, Exec::parallel)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Gradients, serial, Exec::serial)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Gradients, parallel, Exec::parallel)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
