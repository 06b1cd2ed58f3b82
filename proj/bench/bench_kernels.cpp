// Parallel kernels against their serial references, plus one full training
// iteration per environment. Shapes follow the agent networks: hidden width
// 32, a 240-row rollout batch (12 instances x 20 steps).

#include <benchmark/benchmark.h>

#include <vector>

#include "cacl/numerics/kernels.hpp"
#include "cacl/numerics/rng.hpp"
#include "cacl/training/trainer.hpp"

namespace k = cacl::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  cacl::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Parallel>
void BM_GemmNT(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  const auto a = random_vector(m * kk, 1), b = random_vector(n * kk, 2), bias = random_vector(n, 3);
  std::vector<double> out(m * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::gemm_nt(a, b, bias, m, n, kk, out);
    } else {
      k::serial::gemm_nt(a, b, bias, m, n, kk, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * n * kk));
}

template <bool Parallel>
void BM_GemmTN(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  const auto a = random_vector(kk * m, 4), b = random_vector(kk * n, 5);
  std::vector<double> out(m * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::gemm_tn_acc(a, b, m, n, kk, out);
    } else {
      k::serial::gemm_tn_acc(a, b, m, n, kk, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * n * kk));
}

// Second layer of the Find-Goal encoder: 16 -> 32 filters on a 3x3 view.
template <bool Parallel>
void BM_Conv3x3(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const std::size_t c = 16, f = 32, h = 3, w = 3;
  const auto x = random_vector(batch * c * h * w, 6), kern = random_vector(f * c * 9, 7),
             bias = random_vector(f, 8);
  std::vector<double> cols(batch * h * w * c * 9), out(batch * f * h * w);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::im2col3x3(x, batch, c, h, w, cols);
      k::gemm_nt(cols, kern, bias, batch * h * w, f, c * 9, out);
    } else {
      k::serial::conv2d3x3_direct(x, kern, bias, batch, c, f, h, w, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_TrainIteration(benchmark::State& state, const char* env, cacl::agents::Method method) {
  cacl::training::ExperimentConfig c;
  cacl::training::apply_setting(c, "env", env);
  c.method = method;
  cacl::training::Trainer trainer(c);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.iterate());
}

}  // namespace

BENCHMARK(BM_GemmNT<true>)->Args({240, 32, 32})->Args({240, 128, 32})->Args({2048, 32, 288});
BENCHMARK(BM_GemmNT<false>)->Args({240, 32, 32})->Args({240, 128, 32})->Args({2048, 32, 288});
BENCHMARK(BM_GemmTN<true>)->Args({32, 32, 240})->Args({288, 32, 2048});
BENCHMARK(BM_GemmTN<false>)->Args({32, 32, 240})->Args({288, 32, 2048});
BENCHMARK(BM_Conv3x3<true>)->Arg(240)->Arg(2880);
BENCHMARK(BM_Conv3x3<false>)->Arg(240)->Arg(2880);
BENCHMARK_CAPTURE(BM_TrainIteration, pp_cacl, "pp", cacl::agents::Method::kCacl)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainIteration, fg_cacl, "fg", cacl::agents::Method::kCacl)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainIteration, tj_iac, "tj", cacl::agents::Method::kIac)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
