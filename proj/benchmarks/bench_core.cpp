#include <benchmark/benchmark.h>

#include "flagflow/jacobi.hpp"
#include "flagflow/liebm.hpp"

using namespace flagflow;

static void BM_expm_skew(benchmark::State& state) {
  const int n = int(state.range(0));
  RngStream rng(7, 0);
  const LieIncrement inc = sample_skew_increment(n, 1e-3, rng);
  for (auto _ : state) benchmark::DoNotOptimize(expm(inc.dA));
}
BENCHMARK(BM_expm_skew)->Arg(2)->Arg(4)->Arg(8);

static void BM_eigh(benchmark::State& state) {
  const int n = int(state.range(0));
  RngStream rng(7, 1);
  CMat g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = cdouble(rng.normal(), rng.normal());
  const CMat h = hermitian_part(g * g.adjoint());
  for (auto _ : state) benchmark::DoNotOptimize(eigh(h));
}
BENCHMARK(BM_eigh)->Arg(2)->Arg(4)->Arg(8);

static void BM_unitary_step(benchmark::State& state) {
  const int n = int(state.range(0));
  RngStream rng(7, 2);
  UnitaryMatrix u = haar_unitary(n, rng);
  for (auto _ : state) {
    const LieIncrement inc = sample_skew_increment(n, 1e-3, rng);
    u = step_unitary(u, inc);
    benchmark::DoNotOptimize(u);
  }
}
BENCHMARK(BM_unitary_step)->Arg(2)->Arg(4)->Arg(6);

static void BM_jacobi_step(benchmark::State& state) {
  const int m = int(state.range(0));
  const FlagDims dims(m, 1);
  RngStream rng(7, 3);
  const JacobiIndex idx = JacobiIndex::radial(dims);
  JacobiState s{barycenter_simplex(dims), 0.0};
  for (auto _ : state) {
    s = step_jacobi(s, idx, 1e-3, rng);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_jacobi_step)->Arg(1)->Arg(2);

static void BM_det_arg(benchmark::State& state) {
  const int n = int(state.range(0));
  RngStream rng(7, 4);
  CMat g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = cdouble(rng.normal(), rng.normal());
  for (auto _ : state) benchmark::DoNotOptimize(det_arg(g));
}
BENCHMARK(BM_det_arg)->Arg(2)->Arg(4)->Arg(8);

BENCHMARK_MAIN();
