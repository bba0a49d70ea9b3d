// Serial reference vs OpenMP kernels. Arg = problem size.

#include <benchmark/benchmark.h>

#include "laser/grouping.hpp"
#include "laser/hypergraph.hpp"
#include "laser/kernels.hpp"
#include "laser/synthetic.hpp"

using namespace laser;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Matrix m(r, c);
  Rng g(seed);
  for (double& x : m.data()) x = g.normal();
  return m;
}

template <kernels::Exec E>
void BM_centroid_distances(benchmark::State& state) {
  auto p = random_matrix(state.range(0), 16, 1);
  auto c = random_matrix(16, 16, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::centroid_sq_distances(p, c, E));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 16);
}

template <kernels::Exec E>
void BM_pair_sum(benchmark::State& state) {
  auto p = random_matrix(state.range(0), 16, 3);
  std::vector<Index> members(state.range(0));
  for (Index i = 0; i < members.size(); ++i) members[i] = i;
  for (auto _ : state) benchmark::DoNotOptimize(kernels::inverse_distance_pair_sum(p, members, 1e-8, E));
}

template <kernels::Exec E>
void BM_balanced_kmeans(benchmark::State& state) {
  auto p = random_matrix(state.range(0), 16, 4);
  ClusterConfig cfg{8, 10, 1};
  for (auto _ : state) benchmark::DoNotOptimize(balanced_kmeans(p, cfg, random_balanced_labels(p.rows(), 8, 1), E));
}

InteractionMatrix bench_matrix(std::size_t users) {
  SyntheticSpec s;
  s.n_users = users;
  return build_matrix(make_synthetic(s).triples, 1);
}

template <kernels::Exec E>
void BM_build_hypergraph(benchmark::State& state) {
  auto m = bench_matrix(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_hypergraph(m, 4, E));
}

template <kernels::Exec E>
void BM_random_walk(benchmark::State& state) {
  auto g = build_hypergraph(bench_matrix(state.range(0)), 4);
  WalkConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(random_walk(g, cfg, E));
}

constexpr auto serial = kernels::Exec::serial;
constexpr auto parallel = kernels::Exec::parallel;

}  // namespace

BENCHMARK(BM_centroid_distances<serial>)->Arg(1000)->Arg(10000);
BENCHMARK(BM_centroid_distances<parallel>)->Arg(1000)->Arg(10000);
BENCHMARK(BM_pair_sum<serial>)->Arg(500)->Arg(2000);
BENCHMARK(BM_pair_sum<parallel>)->Arg(500)->Arg(2000);
BENCHMARK(BM_balanced_kmeans<serial>)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_balanced_kmeans<parallel>)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_build_hypergraph<serial>)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_build_hypergraph<parallel>)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_random_walk<serial>)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_random_walk<parallel>)->Arg(500)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
