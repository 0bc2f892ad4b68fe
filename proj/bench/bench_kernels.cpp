// OpenMP kernels against their serial references, at the matrix sizes the
// models actually use.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "must/kernels.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (double& x : v) x = nd(rng);
  return v;
}

template <auto Kernel>
void matmul_bench(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Kernel(a, b, c, n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <auto Kernel>
void softmax_bench(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = rows;
  const auto x = random_values(rows * cols, 3);
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    Kernel(x, y, rows, cols);
    benchmark::DoNotOptimize(y.data());
  }
}

template <auto Kernel>
void layer_norm_bench(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = std::size_t{256};
  const auto x = random_values(rows * cols, 4);
  const std::vector<double> gamma(cols, 1.0), beta(cols, 0.0);
  std::vector<double> y(rows * cols), mean(rows), rstd(rows);
  for (auto _ : state) {
    Kernel(x, gamma, beta, y, mean, rstd, rows, cols, 1e-5);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

using namespace must::kernels;

BENCHMARK(matmul_bench<serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(matmul_bench<must::kernels::matmul>)->Name("matmul/omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(matmul_bench<serial::matmul_nt>)->Name("matmul_nt/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(matmul_bench<must::kernels::matmul_nt>)->Name("matmul_nt/omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(matmul_bench<serial::matmul_tn>)->Name("matmul_tn/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(matmul_bench<must::kernels::matmul_tn>)->Name("matmul_tn/omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(softmax_bench<serial::softmax_rows>)->Name("softmax_rows/serial")->Arg(128)->Arg(512);
BENCHMARK(softmax_bench<must::kernels::softmax_rows>)->Name("softmax_rows/omp")->Arg(128)->Arg(512);
BENCHMARK(layer_norm_bench<serial::layer_norm_rows>)->Name("layer_norm_rows/serial")->Arg(128)->Arg(1024);
BENCHMARK(layer_norm_bench<must::kernels::layer_norm_rows>)->Name("layer_norm_rows/omp")->Arg(128)->Arg(1024);

BENCHMARK_MAIN();
