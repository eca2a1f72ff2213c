#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "helpers.hpp"
#include "optmig/enclave.hpp"
#include "optmig/optmgr.hpp"

using namespace optmig;
using optmig::test::enclave_config;

namespace {

Error capture(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "no error thrown";
  return Error(ErrorCode::ConfigInvalid, "none");
}

}  // namespace

TEST(EnclaveInit, OneMiBCommittedOutOfOneGiB) {
  Enclave e(enclave_config(GiB, MiB));
  EXPECT_EQ(e.counters().eadd, 256u);
  EXPECT_EQ(e.init_time(), kDefaultPerPageAddCost * 256);
}

TEST(EnclaveInit, NothingCommittedLeavesEveryPagePending) {
  EnclaveConfig c = enclave_config(GiB);
  c.committed_bytes = 0;
  Enclave e(c);
  EXPECT_EQ(e.counters().eadd, 0u);
  EXPECT_EQ(e.init_time(), Nanos{0});
  for (PageIndex p : {PageIndex{0}, PageIndex{1000}, e.page_count() - 1}) {
    EXPECT_EQ(e.state(p), PageState::Pending);
  }
}

TEST(EnclaveInit, OneGiBTakesAboutTwoSeconds) {
  const Nanos t = InitCostModel{}.init_time(GiB);
  const double ms = std::chrono::duration<double, std::milli>(t).count();
  EXPECT_NEAR(ms, 2000.0, 200.0);
}

TEST(EnclaveInit, InitTimeIsLinearInCommittedSize) {
  const InitCostModel m;
  EXPECT_EQ(m.init_time(20 * GiB), m.init_time(GiB) * 20);
  EXPECT_EQ(m.init_time(0), Nanos{0});
}

TEST(EnclaveInit, RejectsBadConfigs) {
  EXPECT_EQ(capture([] { Enclave e(enclave_config(4097, 4096)); }).code(), ErrorCode::ConfigInvalid);
  EnclaveConfig over = enclave_config(4 * KiB);
  over.committed_bytes = 8 * KiB;
  EXPECT_EQ(capture([&] { Enclave e(over); }).code(), ErrorCode::ConfigInvalid);
}

TEST(EnclaveAlloc, ReusesCommittedFreePagesWithoutEaug) {
  Enclave e(enclave_config(64 * KiB, 40 * KiB));
  auto pages = e.alloc_pages(10);
  e.free_pages(pages);
  const auto before = e.counters();
  e.alloc_pages(10);
  EXPECT_EQ(e.counters().eaug, before.eaug);
}

TEST(EnclaveAlloc, UncommittedPagesTakeEaug) {
  EnclaveConfig c = enclave_config(64 * KiB);
  c.committed_bytes = 0;
  Enclave e(c);
  e.alloc_pages(10);
  EXPECT_EQ(e.counters().eaug, 10u);
}

TEST(EnclaveAlloc, ExhaustionIsReported) {
  Enclave e(enclave_config(8 * KiB));
  EXPECT_EQ(capture([&] { e.alloc_pages(3); }).code(), ErrorCode::OutOfEnclaveMemory);
}

TEST(EnclaveFree, CommittedRegionIsNotRemoved) {
  Enclave e(enclave_config(64 * KiB * 2));
  auto pages = e.alloc_pages(16);
  e.free_pages(pages);
  EXPECT_EQ(e.counters().eremove, 0u);
}

TEST(EnclaveFree, AugmentedRegionIsRemoved) {
  EnclaveConfig c = enclave_config(128 * KiB);
  c.committed_bytes = 0;
  Enclave e(c);
  auto pages = e.alloc_pages(16);
  e.free_pages(pages);
  EXPECT_EQ(e.counters().eremove, 16u);
}

TEST(EnclaveFree, DoubleFreeIsRejected) {
  Enclave e(enclave_config(64 * KiB));
  auto pages = e.alloc_pages(2);
  e.free_pages(pages);
  EXPECT_EQ(capture([&] { e.free_pages(pages); }).code(), ErrorCode::DoubleFree);
}

TEST(EnclaveFree, AllocFreeLoopMatchesCounterReplay) {
  for (std::uint64_t k : {1u, 7u, 100u}) {
    EnclaveConfig c = enclave_config(16 * KiB);
    c.committed_bytes = 0;
    Enclave e(c);
    // Replay of the counter rules: every alloc of a pending page is one EAUG,
    // every free of an augmented page one EREMOVE.
    std::uint64_t aug = 0, rem = 0;
    for (std::uint64_t i = 0; i < k; ++i) {
      auto p = e.alloc_pages(1);
      if (e.state(p[0]) == PageState::Added) ++aug;
      e.free_pages(p);
      if (e.state(p[0]) == PageState::Pending) ++rem;
    }
    EXPECT_EQ(aug, k);
    EXPECT_EQ(rem, k);
    EXPECT_EQ(e.counters().eaug, k);
    EXPECT_EQ(e.counters().eremove, k);
  }
}

TEST(EnclaveEdmm, HalfCommittedBufferLoop) {
  // One 200 MiB temporary buffer per ECALL, allocated and freed in the call.
  auto run = [](Bytes committed) {
    EnclaveConfig c = enclave_config(200 * MiB);
    c.committed_bytes = committed;
    Host host(c);
    host.enclave().transition(Phase::Running);
    for (int i = 0; i < 5; ++i) {
      host.enclave().ecall([&] {
        Allocation a = host.heap().malloc(200 * MiB);
        host.heap().free(a.id);
      });
    }
    return host.enclave().counters();
  };
  const EdmmCounters full = run(200 * MiB);
  const EdmmCounters half = run(100 * MiB);
  EXPECT_EQ(half.eadd * 2, full.eadd);
  EXPECT_GT(half.eaug, full.eaug);
  EXPECT_GT(half.eremove, full.eremove);
  EXPECT_EQ(full.eaug, 0u);
}

TEST(EnclaveEdmm, EaddNeverChangesAfterInit) {
  EnclaveConfig c = enclave_config(256 * KiB, 64 * KiB);
  Enclave e(c);
  const auto eadd = e.counters().eadd;
  auto p = e.alloc_pages(40);
  e.free_pages(p);
  e.zeroize();
  EXPECT_EQ(e.counters().eadd, eadd);
}

TEST(EnclaveMemory, PendingPagesAreUnreadable) {
  EnclaveConfig c = enclave_config(16 * KiB);
  c.committed_bytes = 4 * KiB;
  Enclave e(c);
  std::array<std::byte, 8> buf{};
  EXPECT_EQ(capture([&] { e.read(8 * KiB, buf); }).code(), ErrorCode::UnreadablePage);
  EXPECT_EQ(capture([&] { e.read(16 * KiB, buf); }).code(), ErrorCode::WildAccess);
}

TEST(EnclaveMemory, UntouchedPagesReadZeroAndInstallZeroStaysLazy) {
  Enclave e(enclave_config(16 * KiB));
  e.alloc_range(0, 2);
  std::array<std::byte, 16> buf;
  buf.fill(std::byte{1});
  e.read(100, buf);
  for (auto b : buf) EXPECT_EQ(b, std::byte{0});
  Page zero{};
  e.install_page(1, zero);
  EXPECT_FALSE(e.page_materialized(1));
  const std::array<std::byte, 2> two{std::byte{7}, std::byte{9}};
  e.write(kPageSize - 1, two);  // straddles pages 0 and 1
  EXPECT_TRUE(e.page_materialized(0));
  EXPECT_TRUE(e.page_materialized(1));
}

TEST(EnclavePhase, EcallRequiresRunning) {
  Enclave e(enclave_config(16 * KiB));
  EXPECT_EQ(capture([&] { e.ecall([] {}); }).code(), ErrorCode::EnclaveNotRunning);
  e.transition(Phase::Running);
  e.request_pause(nullptr);
  EXPECT_EQ(e.phase(), Phase::Paused);
  EXPECT_EQ(capture([&] { e.ecall([] {}); }).code(), ErrorCode::EnclaveNotRunning);
}

TEST(EnclavePhase, IllegalTransitionsAreRejected) {
  Enclave e(enclave_config(16 * KiB));
  EXPECT_EQ(capture([&] { e.transition(Phase::Paused); }).code(),
            ErrorCode::InvalidPhaseTransition);
  e.transition(Phase::Running);
  EXPECT_EQ(capture([&] { e.transition(Phase::Drained); }).code(),
            ErrorCode::InvalidPhaseTransition);
  EXPECT_EQ(capture([&] { e.resume_after_abort(); }).code(), ErrorCode::InvalidPhaseTransition);
  e.transition(Phase::Paused);
  e.transition(Phase::Saving);
  e.resume_after_abort();
  EXPECT_EQ(e.phase(), Phase::Running);
}

TEST(EnclavePhase, PauseWaitsForTheEcallInFlight) {
  Enclave e(enclave_config(16 * KiB));
  e.transition(Phase::Running);
  bool paused = false;
  e.ecall([&] {
    e.request_pause([&] { paused = true; });
    EXPECT_FALSE(paused);
    EXPECT_EQ(e.phase(), Phase::Running);
  });
  EXPECT_TRUE(paused);
  EXPECT_EQ(e.phase(), Phase::Paused);
}

TEST(EnclavePhase, BlockingPauseAcrossThreads) {
  Enclave e(enclave_config(16 * KiB));
  e.transition(Phase::Running);
  std::atomic<bool> inside{false}, release{false}, returned{false};
  std::thread worker([&] {
    e.ecall([&] {
      inside = true;
      while (!release) std::this_thread::yield();
    });
    returned = true;
  });
  while (!inside) std::this_thread::yield();
  std::thread pauser([&] { e.pause(); });
  std::this_thread::sleep_for(std::chrono::milliseconds(20));
  EXPECT_EQ(e.phase(), Phase::Running);
  release = true;
  pauser.join();
  worker.join();
  EXPECT_TRUE(returned);
  EXPECT_EQ(e.phase(), Phase::Paused);
}

TEST(EnclaveDirty, TrackingOnlyOnPlainMemory) {
  Enclave sgx(enclave_config(16 * KiB));
  EXPECT_FALSE(sgx.supports_dirty_tracking());
  EXPECT_EQ(capture([&] { sgx.start_dirty_tracking(); }).code(), ErrorCode::CapabilityUnsupported);

  Enclave plain(enclave_config(16 * KiB, 0, MemoryKind::Plain));
  plain.alloc_range(0, 4);
  plain.start_dirty_tracking();
  const std::array<std::byte, 1> one{std::byte{1}};
  plain.write(2 * kPageSize + 5, one);
  plain.write(0, one);
  EXPECT_EQ(plain.collect_dirty(), (std::vector<PageIndex>{0, 2}));
  EXPECT_TRUE(plain.collect_dirty().empty());
  EXPECT_EQ(plain.counters().eadd, 0u);
}
