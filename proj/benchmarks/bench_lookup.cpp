#include <benchmark/benchmark.h>

#include <random>

#include "optmig/optmgr.hpp"

namespace {

using namespace optmig;

MemArr make_table(LookupStrategy s, std::size_t n) {
  MemArr arr(s);
  for (std::size_t i = 0; i < n; ++i) {
    arr.append(MemRegion{RegionId{i + 1}, i * 2 * kPageSize, kPageSize, 0});
  }
  return arr;
}

void run_lookup(benchmark::State& state, LookupStrategy s) {
  const auto n = std::size_t(state.range(0));
  const MemArr arr = make_table(s, n);
  std::mt19937_64 rng(7);
  std::vector<Bytes> addrs(4096);
  for (auto& a : addrs) a = (rng() % n) * 2 * kPageSize + rng() % kPageSize;
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(arr.lookup(addrs[i++ & 4095]));
  }
}

void BM_LookupLinear(benchmark::State& state) { run_lookup(state, LookupStrategy::Linear); }
void BM_LookupInterval(benchmark::State& state) { run_lookup(state, LookupStrategy::Interval); }
BENCHMARK(BM_LookupLinear)->RangeMultiplier(8)->Range(8, 4096);
BENCHMARK(BM_LookupInterval)->RangeMultiplier(8)->Range(8, 4096);

}  // namespace
