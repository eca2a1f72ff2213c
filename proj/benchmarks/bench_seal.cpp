#include <benchmark/benchmark.h>

#include "optmig/seal.hpp"

namespace {

using namespace optmig;

Page test_page() {
  Page p{};
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::byte(i * 31 + 7);
  return p;
}

void BM_SealPage(benchmark::State& state) {
  const Page page = test_page();
  const Key key = random_key();
  for (auto _ : state) benchmark::DoNotOptimize(seal_page(0, page, key));
  state.SetBytesProcessed(std::int64_t(state.iterations()) * std::int64_t(kPageSize));
}
BENCHMARK(BM_SealPage);

void BM_UnsealPage(benchmark::State& state) {
  const Key key = random_key();
  const SealedPage sealed = seal_page(0, test_page(), key);
  Page out{};
  for (auto _ : state) {
    unseal_page_into(sealed, key, out);
    benchmark::DoNotOptimize(out);
  }
  state.SetBytesProcessed(std::int64_t(state.iterations()) * std::int64_t(kPageSize));
}
BENCHMARK(BM_UnsealPage);

void BM_GenerateKeys(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(generate_keys(std::size_t(state.range(0))));
  state.SetItemsProcessed(std::int64_t(state.iterations()) * state.range(0));
}
BENCHMARK(BM_GenerateKeys)->Arg(1 << 10)->Arg(1 << 16);

}  // namespace
