#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>

#include "mfff/kernels.hpp"

namespace k = mfff::kernels;

namespace {

struct Data {
  std::vector<double> x, w, f, out;
  explicit Data(std::size_t n) : x(n), w(n), f(n), out(n) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = 5.0 * U(rng);
      w[i] = 1.0 / static_cast<double>(n);
      f[i] = U(rng);
    }
    std::sort(x.begin(), x.end());
  }
};

void BM_MinKernelSerial(benchmark::State& st) {
  Data d(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) {
    k::min_kernel_apply_serial<double>(d.x, d.w, d.f, d.out);
    benchmark::DoNotOptimize(d.out.data());
  }
}

void BM_MinKernelOmp(benchmark::State& st) {
  Data d(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) {
    k::min_kernel_apply_omp<double>(d.x, d.w, d.f, d.out);
    benchmark::DoNotOptimize(d.out.data());
  }
}

void BM_MinKernelPrefix(benchmark::State& st) {
  Data d(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) {
    k::min_kernel_apply_prefix<double>(d.x, d.w, d.f, d.out);
    benchmark::DoNotOptimize(d.out.data());
  }
}

void BM_SelfConvSerial(benchmark::State& st) {
  Data d(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) {
    k::self_convolution_serial(d.f, d.out);
    benchmark::DoNotOptimize(d.out.data());
  }
}

void BM_SelfConvOmp(benchmark::State& st) {
  Data d(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) {
    k::self_convolution_omp(d.f, d.out);
    benchmark::DoNotOptimize(d.out.data());
  }
}

}  // namespace

BENCHMARK(BM_MinKernelSerial)->Arg(500)->Arg(2000);
BENCHMARK(BM_MinKernelOmp)->Arg(500)->Arg(2000);
BENCHMARK(BM_MinKernelPrefix)->Arg(500)->Arg(2000)->Arg(100000);
BENCHMARK(BM_SelfConvSerial)->Arg(1000)->Arg(4000);
BENCHMARK(BM_SelfConvOmp)->Arg(1000)->Arg(4000);

BENCHMARK_MAIN();
