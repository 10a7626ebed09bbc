#include <benchmark/benchmark.h>

#include "ness/estimator.hpp"
#include "ness/exact.hpp"
#include "ness/ndo.hpp"
#include "ness/sampler.hpp"

using namespace ness;

namespace {

LindbladMap model_a(int n) { return LindbladMap({n, 0.105, 1.0}, DriveSpec::model_a(n, 0.2, 0.05)); }

void BM_LogRho(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto p = init_params(n, 1, 1, 1, 0.1);
  const NdoEvaluator eval(p, false);
  Rng rng(3);
  const BasisState mask = (BasisState{1} << n) - 1;
  std::vector<ConfigurationPair> pairs(256);
  for (auto& x : pairs) x = {static_cast<BasisState>(rng()) & mask, static_cast<BasisState>(rng()) & mask};
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(eval.log_rho(pairs[i++ % pairs.size()]));
}
BENCHMARK(BM_LogRho)->Arg(6)->Arg(12)->Arg(18);

void BM_LogDerivatives(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto p = init_params(n, 1, 1, 1, 0.1);
  const NdoEvaluator eval(p, true);
  Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(p.size());
  const ConfigurationPair x{0b010101u, 0b100110u};
  for (auto _ : state) {
    eval.add_log_derivatives(x, Complex(1.0, 0.5), acc);
    benchmark::DoNotOptimize(acc.data());
  }
}
BENCHMARK(BM_LogDerivatives)->Arg(6)->Arg(12);

void BM_LindbladRow(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const LindbladMap map = model_a(n);
  std::vector<LindbladEntry> row;
  const BasisState mask = (BasisState{1} << n) - 1;
  const ConfigurationPair x{0x55555555u & mask, 0x33333333u & mask};
  for (auto _ : state) {
    map.row(x, row);
    benchmark::DoNotOptimize(row.data());
  }
}
BENCHMARK(BM_LindbladRow)->Arg(6)->Arg(12)->Arg(20);

void BM_ExactGradient(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const LindbladMap map = model_a(n);
  const auto p = init_params(n, 1, 1, 1, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(exact_gradient(p, map).cost);
}
BENCHMARK(BM_ExactGradient)->Arg(4)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_SamplePairs(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto p = init_params(n, 1, 1, 1, 0.1);
  SamplerConfig cfg;
  cfg.n_samples = 2000;
  for (auto _ : state) {
    ++cfg.seed;
    benchmark::DoNotOptimize(sample_pairs(p, cfg).size());
  }
}
BENCHMARK(BM_SamplePairs)->Arg(8)->Arg(18)->Unit(benchmark::kMillisecond);

void BM_McGradient(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const LindbladMap map = model_a(n);
  const auto p = init_params(n, 1, 1, 1, 0.1);
  SamplerConfig cfg;
  cfg.n_samples = 2000;
  const auto batch = sample_pairs(p, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_gradient(p, map, batch).cost);
}
BENCHMARK(BM_McGradient)->Arg(8)->Arg(18)->Unit(benchmark::kMillisecond);

void BM_SteadyState(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const LindbladMap map = model_a(n);
  for (auto _ : state) benchmark::DoNotOptimize(steady_state_ed(map).matrix.data());
}
BENCHMARK(BM_SteadyState)->Arg(4)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
