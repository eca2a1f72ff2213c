#include <benchmark/benchmark.h>

#include "optmig/host.hpp"

namespace {

using namespace optmig;

struct Fixture {
  Host host{EnclaveConfig{64 * MiB, 64 * MiB, kDefaultPerPageAddCost, MemoryKind::EnclaveBacked}};
  Allocation a;
  Fixture() {
    host.enclave().transition(Phase::Running);
    a = host.heap().malloc(16 * MiB);
  }
};

// Every page already restored: bit-vector check only.
struct AlwaysRestored final : PageRestorer {
  bool restore_slot(std::size_t) override { return false; }
};

void BM_GuardFastPath(benchmark::State& state) {
  Fixture f;
  Bytes off = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(f.host.guard().process_access(f.a.offset + off, 64));
    off = (off + 4096) % (16 * MiB);
  }
}
BENCHMARK(BM_GuardFastPath);

void BM_GuardBitvectorPath(benchmark::State& state) {
  Fixture f;
  const std::size_t pages = 16 * MiB / kPageSize;
  BitVector restored(pages, BitRole::RestoreVec);
  for (std::size_t i = 0; i < pages; ++i) restored.set(i);
  std::vector<std::uint32_t> page_to_slot(f.host.enclave().page_count(), kNoSlot);
  for (std::size_t i = 0; i < pages; ++i) {
    page_to_slot[page_of(f.a.offset) + i] = static_cast<std::uint32_t>(i);
  }
  AlwaysRestored restorer;
  f.host.guard().begin_restore(restored, page_to_slot, restorer);
  Bytes off = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(f.host.guard().process_access(f.a.offset + off, 64));
    off = (off + 4096) % (16 * MiB);
  }
}
BENCHMARK(BM_GuardBitvectorPath);

void BM_GuardedRead(benchmark::State& state) {
  Fixture f;
  std::array<std::byte, 64> buf{};
  Bytes off = 0;
  for (auto _ : state) {
    f.host.access().read(f.a.offset + off, buf);
    benchmark::DoNotOptimize(buf);
    off = (off + 4096) % (16 * MiB);
  }
}
BENCHMARK(BM_GuardedRead);

}  // namespace
