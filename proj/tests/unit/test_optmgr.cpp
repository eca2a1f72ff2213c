#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"
#include "optmig/layout.hpp"
#include "optmig/optmgr.hpp"

using namespace optmig;
using optmig::test::enclave_config;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::ConfigInvalid;
}

HeapMetadata random_metadata(std::mt19937_64& rng) {
  HeapMetadata m;
  const std::size_t n = rng() % 20;
  Bytes offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    MemRegion r;
    r.id = RegionId{rng() % 1000 * 20 + i + 1};
    offset += (rng() % 4) * kPageSize;
    r.offset = offset;
    r.size = 1 + rng() % (5 * kPageSize);
    r.usage_count = rng() % 100;
    offset += r.page_count() * kPageSize;
    m.regions.push_back(r);
    m.layout.push_back(r.id);
  }
  std::shuffle(m.layout.begin(), m.layout.end(), rng);
  m.data_segment.resize(rng() % 64);
  for (auto& b : m.data_segment) b = std::byte(rng());
  m.bss_segment.resize(rng() % 64);
  return m;
}

}  // namespace

TEST(OptMgr, OneByteTakesOneWholePage) {
  Host h(enclave_config(64 * KiB));
  Allocation a = h.heap().malloc(1);
  const MemRegion* r = h.heap().regions().find(a.id);
  ASSERT_NE(r, nullptr);
  EXPECT_EQ(r->size, 1u);
  EXPECT_EQ(r->page_count(), 1u);
  Allocation b = h.heap().malloc(1);
  EXPECT_EQ(b.offset - a.offset, kPageSize);
}

TEST(OptMgr, NodeSizedAllocationGetsFreshId) {
  struct Node {
    std::uint64_t value;
    Bytes next;
  };
  Host h(enclave_config(64 * KiB));
  Allocation head = h.heap().malloc(sizeof(Node));
  Allocation second = h.heap().malloc(sizeof(Node));
  EXPECT_EQ(h.heap().regions().size(), 2u);
  EXPECT_NE(head.id, second.id);
}

TEST(OptMgr, TwoLargeRegionsInAllocationOrder) {
  Host h(enclave_config(1024 * MiB + 64 * KiB, 64 * KiB));
  Allocation a = h.heap().malloc(500 * MiB);
  Allocation b = h.heap().malloc(500 * MiB);
  const auto regions = h.heap().regions().regions();
  ASSERT_EQ(regions.size(), 2u);
  EXPECT_EQ(regions[0].id, a.id);
  EXPECT_EQ(regions[1].id, b.id);
  EXPECT_EQ(to_underlying(a.id), 1u);
  EXPECT_EQ(to_underlying(b.id), 2u);
}

TEST(OptMgr, FreedRegionNoLongerResolves) {
  Host h(enclave_config(64 * KiB));
  Allocation a = h.heap().malloc(3 * kPageSize);
  EXPECT_NE(h.heap().lookup(a.offset + 5000), nullptr);
  h.heap().free(a.id);
  EXPECT_EQ(h.heap().lookup(a.offset + 5000), nullptr);
  EXPECT_EQ(code_of([&] { h.heap().free(a.id); }), ErrorCode::UnknownRegion);
}

TEST(OptMgr, FreeAtNeedsTheRegionStart) {
  Host h(enclave_config(64 * KiB));
  Allocation a = h.heap().malloc(2 * kPageSize);
  EXPECT_EQ(code_of([&] { h.heap().free_at(a.offset + 1); }), ErrorCode::UnknownRegion);
  h.heap().free_at(a.offset);
  EXPECT_TRUE(h.heap().regions().empty());
}

TEST(OptMgr, TemporaryBufferPerEcallKeepsTableSize) {
  Host h(enclave_config(256 * KiB));
  h.enclave().transition(Phase::Running);
  h.heap().malloc(kPageSize);
  const std::size_t baseline = h.heap().regions().size();
  for (int i = 0; i < 50; ++i) {
    h.enclave().ecall([&] {
      Allocation tmp = h.heap().malloc(5000 + i);
      EXPECT_EQ(h.heap().regions().size(), baseline + 1);
      h.heap().free(tmp.id);
    });
    EXPECT_EQ(h.heap().regions().size(), baseline);
  }
}

TEST(OptMgr, FirstFitReusesHoles) {
  Host h(enclave_config(64 * KiB));
  Allocation a = h.heap().malloc(2 * kPageSize);
  Allocation b = h.heap().malloc(kPageSize);
  h.heap().free(a.id);
  Allocation c = h.heap().malloc(kPageSize);
  EXPECT_EQ(c.offset, a.offset);
  EXPECT_GT(b.offset, c.offset);
  EXPECT_EQ(code_of([&] { h.heap().malloc(0); }), ErrorCode::ConfigInvalid);
  EXPECT_EQ(code_of([&] { h.heap().malloc(64 * KiB); }), ErrorCode::OutOfEnclaveMemory);
}

TEST(MemArrLookup, LinearAndIntervalAgreeWithBruteForce) {
  std::mt19937_64 rng(7);
  MemArr linear(LookupStrategy::Linear);
  MemArr interval(LookupStrategy::Interval);
  std::vector<MemRegion> truth;
  Bytes offset = 0;
  for (std::uint64_t i = 1; i <= 300; ++i) {
    MemRegion r{RegionId{i}, offset, 1 + rng() % (3 * kPageSize), 0};
    offset += r.page_count() * kPageSize + (rng() % 3) * kPageSize;
    linear.append(r);
    interval.append(r);
    truth.push_back(r);
  }
  for (int k = 0; k < 100; ++k) {
    const auto victim = truth[rng() % truth.size()].id;
    linear.erase(victim);
    interval.erase(victim);
    std::erase_if(truth, [&](const MemRegion& r) { return r.id == victim; });
  }
  for (int q = 0; q < 20000; ++q) {
    const Bytes addr = rng() % (offset + kPageSize);
    const MemRegion* expect = nullptr;
    for (const auto& r : truth) {
      if (addr >= r.offset && addr < r.offset + r.size) expect = &r;
    }
    const MemRegion* l = linear.lookup(addr);
    const MemRegion* i = interval.lookup(addr);
    if (!expect) {
      EXPECT_EQ(l, nullptr) << addr;
      EXPECT_EQ(i, nullptr) << addr;
    } else {
      ASSERT_NE(l, nullptr);
      ASSERT_NE(i, nullptr);
      EXPECT_EQ(l->id, expect->id);
      EXPECT_EQ(i->id, expect->id);
    }
  }
}

TEST(Metadata, EmptyTableRoundTrips) {
  HeapMetadata empty;
  const HeapMetadata back = decode_metadata(encode_metadata(empty));
  EXPECT_TRUE(back.regions.empty());
  EXPECT_EQ(back, empty);
}

TEST(Metadata, RandomTablesRoundTrip) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    const HeapMetadata m = random_metadata(rng);
    EXPECT_EQ(decode_metadata(encode_metadata(m)), m);
  }
}

TEST(Metadata, EncodingMatchesTheDocumentedLayout) {
  HeapMetadata m;
  m.regions.push_back(MemRegion{RegionId{5}, 8192, 10, 3});
  m.layout.push_back(RegionId{5});
  m.data_segment = {std::byte{0xAB}};
  const auto blob = encode_metadata(m);
  ASSERT_EQ(blob.size(), 4u + 8 + 32 + 8 + 8 + 1 + 8);
  EXPECT_EQ(blob[0], std::byte{1});
  EXPECT_EQ(blob[4], std::byte{1});    // region count
  EXPECT_EQ(blob[12], std::byte{5});   // id
  EXPECT_EQ(blob[21], std::byte{0x20});  // offset 8192 = 0x2000
  EXPECT_EQ(blob[44], std::byte{5});   // layout entry
  EXPECT_EQ(blob[52], std::byte{1});   // data_len
  EXPECT_EQ(blob[60], std::byte{0xAB});
}

TEST(Metadata, EveryTruncationIsADecodeError) {
  std::mt19937_64 rng(3);
  HeapMetadata m;
  while (m.regions.empty()) m = random_metadata(rng);
  const auto blob = encode_metadata(m);
  for (std::size_t n = 0; n < blob.size(); ++n) {
    EXPECT_EQ(code_of([&] { decode_metadata(std::span(blob).first(n)); }), ErrorCode::DecodeError)
        << n;
  }
  auto longer = blob;
  longer.push_back(std::byte{0});
  EXPECT_EQ(code_of([&] { decode_metadata(longer); }), ErrorCode::DecodeError);
}

TEST(Metadata, MalformedTablesAreRejected) {
  HeapMetadata dup;
  dup.regions = {MemRegion{RegionId{1}, 0, 10, 0}, MemRegion{RegionId{1}, 8192, 10, 0}};
  dup.layout = {RegionId{1}, RegionId{1}};
  EXPECT_EQ(code_of([&] { decode_metadata(encode_metadata(dup)); }), ErrorCode::DecodeError);

  HeapMetadata overlap;
  overlap.regions = {MemRegion{RegionId{1}, 0, 5000, 0}, MemRegion{RegionId{2}, 4096, 10, 0}};
  overlap.layout = {RegionId{1}, RegionId{2}};
  EXPECT_EQ(code_of([&] { decode_metadata(encode_metadata(overlap)); }), ErrorCode::DecodeError);

  HeapMetadata bad_layout;
  bad_layout.regions = {MemRegion{RegionId{1}, 0, 10, 0}};
  bad_layout.layout = {RegionId{9}};
  EXPECT_EQ(code_of([&] { decode_metadata(encode_metadata(bad_layout)); }),
            ErrorCode::DecodeError);

  auto blob = encode_metadata(HeapMetadata{});
  blob[0] = std::byte{2};
  EXPECT_EQ(code_of([&] { decode_metadata(blob); }), ErrorCode::DecodeError);
}

TEST(Metadata, RandomBytesNeverCrashTheDecoder) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20000; ++i) {
    std::vector<std::byte> junk(rng() % 200);
    for (auto& b : junk) b = std::byte(rng());
    if (i % 2 == 0 && junk.size() >= 4) junk[0] = std::byte{1}, junk[1] = junk[2] = junk[3] = std::byte{0};
    try {
      decode_metadata(junk);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::DecodeError);
    }
  }
}

TEST(Metadata, SmartLayoutListsHotRegionFirst) {
  Host h(enclave_config(256 * KiB));
  Allocation a = h.heap().malloc(16 * KiB);
  Allocation b = h.heap().malloc(16 * KiB);
  for (int i = 0; i < 100; ++i) h.guard().process_access(b.offset + 8, 8);
  h.guard().process_access(a.offset, 8);
  const auto layout = order_layout(h.heap().regions(), Placement::Smart);
  const HeapMetadata m = decode_metadata(h.heap().serialize_metadata(layout));
  ASSERT_EQ(m.layout.size(), 2u);
  EXPECT_EQ(m.layout[0], b.id);
  EXPECT_EQ(m.layout[1], a.id);
}

TEST(Metadata, RestoreRebuildsTheTableOnAFreshHeap) {
  Host src(enclave_config(256 * KiB));
  src.heap().malloc(10);
  Allocation gone = src.heap().malloc(20000);
  src.heap().malloc(kPageSize);
  src.heap().free(gone.id);
  src.heap().data_segment()[3] = std::byte{42};
  const auto layout = order_layout(src.heap().regions(), Placement::Naive);
  const auto blob = src.heap().serialize_metadata(layout);

  Host dst(enclave_config(256 * KiB));
  dst.heap().restore_metadata(blob);
  ASSERT_EQ(dst.heap().regions().size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(dst.heap().regions().regions()[i].id, src.heap().regions().regions()[i].id);
    EXPECT_EQ(dst.heap().regions().regions()[i].offset, src.heap().regions().regions()[i].offset);
  }
  EXPECT_EQ(dst.heap().data_segment()[3], std::byte{42});
  // Fresh ids never collide with restored ones, and the restored pages stay reserved.
  Allocation next = dst.heap().malloc(kPageSize);
  EXPECT_EQ(to_underlying(next.id), 4u);
  EXPECT_EQ(next.offset, gone.offset);
  EXPECT_EQ(code_of([&] { dst.heap().restore_metadata(blob); }), ErrorCode::ConfigInvalid);

  Host small(enclave_config(8 * KiB));
  EXPECT_EQ(code_of([&] { small.heap().restore_metadata(blob); }), ErrorCode::DecodeError);
}

TEST(OptMgr, HeapIsFrozenFromThePause) {
  auto host = optmig::test::running_host(enclave_config(MiB));
  const Allocation a = host->heap().malloc(kPageSize);
  host->enclave().transition(Phase::Paused);
  EXPECT_EQ(code_of([&] { host->heap().malloc(kPageSize); }), ErrorCode::EnclaveNotRunning);
  EXPECT_EQ(code_of([&] { host->heap().free(a.id); }), ErrorCode::EnclaveNotRunning);
  host->enclave().resume_after_abort();
  host->heap().free(a.id);
  EXPECT_EQ(host->heap().regions().size(), 0u);
}
