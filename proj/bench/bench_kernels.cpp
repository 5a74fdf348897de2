// Serial reference kernels against their OpenMP counterparts at flow-matching sizes.
//
//   bench_kernels [--benchmark_filter=...]
//
// Sizes follow the defaults: 4096 pairs per slice, 2000 points, d = 2 (toy) and 32 (latent).

#include <benchmark/benchmark.h>

#include <random>

#include "iterflow/kernels.hpp"

namespace {

using iterflow::Matrix;
namespace k = iterflow::kernels;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

constexpr double kBandwidth = 1.0;

template <auto Fn>
void bm_gram(benchmark::State& state) {
  const Matrix c = random_matrix(state.range(0), state.range(1), 1);
  Matrix out;
  for (auto _ : state) {
    Fn(c, kBandwidth, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}

template <auto Fn>
void bm_apply(benchmark::State& state) {
  const std::size_t m = state.range(0), d = state.range(1);
  const Matrix q = random_matrix(2000, d, 2), c = random_matrix(m, d, 3), theta = random_matrix(m, d, 4);
  Matrix out;
  for (auto _ : state) {
    Fn(q, c, kBandwidth, theta, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * 2000 * m);
}

template <auto Fn>
void bm_multiply(benchmark::State& state) {
  const std::size_t m = state.range(0), d = state.range(1);
  const Matrix a = random_matrix(m, m, 5), x = random_matrix(m, d, 6);
  Matrix y;
  for (auto _ : state) {
    Fn(a, x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * m * m);
}

template <auto Fn>
void bm_nearest(benchmark::State& state) {
  const std::size_t n = state.range(0), d = state.range(1);
  const Matrix a = random_matrix(n, d, 7), b = random_matrix(n, d, 8);
  std::vector<double> out;
  for (auto _ : state) {
    Fn(a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}

void sizes(benchmark::internal::Benchmark* b) {
  b->Args({1024, 2})->Args({4096, 2})->Args({4096, 32})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(bm_gram<k::serial::gaussian_gram>)->Name("gram/serial")->Apply(sizes);
BENCHMARK(bm_gram<k::parallel::gaussian_gram>)->Name("gram/parallel")->Apply(sizes);
BENCHMARK(bm_apply<k::serial::gaussian_apply>)->Name("apply/serial")->Apply(sizes);
BENCHMARK(bm_apply<k::parallel::gaussian_apply>)->Name("apply/parallel")->Apply(sizes);
BENCHMARK(bm_multiply<k::serial::multiply>)->Name("multiply/serial")->Apply(sizes);
BENCHMARK(bm_multiply<k::parallel::multiply>)->Name("multiply/parallel")->Apply(sizes);
BENCHMARK(bm_nearest<k::serial::nearest_squared_distances>)->Name("nearest/serial")->Args({2000, 2})->Args({2000, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(bm_nearest<k::parallel::nearest_squared_distances>)->Name("nearest/parallel")->Args({2000, 2})->Args({2000, 32})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
