// Serial reference vs OpenMP kernels on a synthetic instance large enough to
// show the parallel win: |Z|=4, T=7 gives 65536 terminal prefixes.
#include <benchmark/benchmark.h>

#include <random>

#include "mfce/equilibrium.hpp"
#include "mfce/mean_field.hpp"
#include "mfce/parallel.hpp"
#include "mfce/mfcil.hpp"
#include "mfce/reference.hpp"

using namespace mfce;

namespace {

MfgModel synthetic_model(int S, int A, int Z, int T) {
  MfgModel m;
  m.num_states = S;
  m.num_actions = A;
  m.num_signals = Z;
  m.horizon = T;
  std::mt19937_64 rng(1);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  m.mu0.assign(S, 0.0);
  double sum = 0.0;
  for (double& v : m.mu0) {
    v = gamma(rng);
    sum += v;
  }
  for (double& v : m.mu0) v /= sum;
  DenseKernel k{S, A, Vec(static_cast<std::size_t>(S) * A * S)};
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double rs = 0.0;
      for (int sp = 0; sp < S; ++sp) {
        double v = gamma(rng);
        k.table[(static_cast<std::size_t>(s) * A + a) * S + sp] = v;
        rs += v;
      }
      for (int sp = 0; sp < S; ++sp)
        k.table[(static_cast<std::size_t>(s) * A + a) * S + sp] /= rs;
    }
  m.dense_kernel = k;
  AffineReward r{S, A, Vec(static_cast<std::size_t>(S) * A),
                 Vec(static_cast<std::size_t>(S) * A * S)};
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (double& v : r.base) v = unif(rng);
  for (double& v : r.coef) v = unif(rng);
  m.affine_reward = r;
  return m;
}

struct Fixture {
  MfgModel model = synthetic_model(5, 3, 4, 7);
  BehavioralPolicy pi = BehavioralPolicy::uniform(8, 4, 5, 3);
  CorrelationDevice rho = CorrelationDevice::uniform(8, 4);
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

static void BM_ComputeQ_Serial(benchmark::State& state) {
  Fixture& f = fixture();
  for (auto _ : state) {
    QTable q = reference::compute_q(f.model, f.pi, f.pi, f.rho);
    benchmark::DoNotOptimize(q.values.back().data());
  }
}
BENCHMARK(BM_ComputeQ_Serial)->Unit(benchmark::kMillisecond);

static void BM_ComputeQ_Parallel(benchmark::State& state) {
  Fixture& f = fixture();
  set_num_workers(static_cast<int>(state.range(0)));
  QOptions opts;
  opts.enumeration_cap = 1 << 20;
  for (auto _ : state) {
    QTable q = compute_q(f.model, f.pi, f.pi, f.rho, opts);
    benchmark::DoNotOptimize(q.values.back().data());
  }
  set_num_workers(1);
}
BENCHMARK(BM_ComputeQ_Parallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_ExpectedReturn_Serial(benchmark::State& state) {
  Fixture& f = fixture();
  for (auto _ : state) {
    double j = reference::expected_return(f.model, f.pi, f.pi, f.rho);
    benchmark::DoNotOptimize(j);
  }
}
BENCHMARK(BM_ExpectedReturn_Serial)->Unit(benchmark::kMillisecond);

static void BM_ExpectedReturn_Parallel(benchmark::State& state) {
  Fixture& f = fixture();
  set_num_workers(static_cast<int>(state.range(0)));
  ReturnOptions opts;
  opts.enumeration_cap = 1 << 20;
  for (auto _ : state) {
    double j = expected_return(f.model, f.pi, f.pi, f.rho, opts);
    benchmark::DoNotOptimize(j);
  }
  set_num_workers(1);
}
BENCHMARK(BM_ExpectedReturn_Parallel)
    ->Arg(1)
    ->Arg(2)
    ->Arg(4)
    ->Arg(8)
    ->Unit(benchmark::kMillisecond);

static void BM_Rollouts_Parallel(benchmark::State& state) {
  Fixture& f = fixture();
  set_num_workers(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    DemonstrationSet demos = generate_demonstrations(f.model, f.pi, f.rho, 4096, 7);
    benchmark::DoNotOptimize(demos.data());
  }
  set_num_workers(1);
}
BENCHMARK(BM_Rollouts_Parallel)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
