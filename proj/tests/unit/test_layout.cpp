#include <gtest/gtest.h>

#include <random>

#include "optmig/layout.hpp"

using namespace optmig;

namespace {

std::vector<MemRegion> regions_with(const std::vector<std::uint64_t>& counts) {
  std::vector<MemRegion> out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out.push_back(MemRegion{RegionId{i + 1}, i * 2 * kPageSize, kPageSize + 1, counts[i]});
  }
  return out;
}

}  // namespace

TEST(Layout, AllZeroCountsKeepAllocationOrder) {
  const auto r = regions_with({0, 0, 0, 0});
  EXPECT_EQ(order_layout(r, Placement::Smart), order_layout(r, Placement::Naive));
}

TEST(Layout, HotRegionGoesFirst) {
  const auto r = regions_with({1, 1000});
  EXPECT_EQ(order_layout(r, Placement::Smart), (std::vector<RegionId>{RegionId{2}, RegionId{1}}));
  EXPECT_EQ(order_layout(r, Placement::Naive), (std::vector<RegionId>{RegionId{1}, RegionId{2}}));
}

TEST(Layout, MatchesAReferenceStableSort) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::uint64_t> counts(rng() % 40);
    for (auto& c : counts) c = rng() % 6;  // plenty of ties
    const auto r = regions_with(counts);
    // Insertion sort by descending count: stable by construction.
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::size_t pos = idx.size();
      while (pos > 0 && r[idx[pos - 1]].usage_count < r[i].usage_count) --pos;
      idx.insert(idx.begin() + static_cast<std::ptrdiff_t>(pos), i);
    }
    std::vector<RegionId> expect;
    for (std::size_t i : idx) expect.push_back(r[i].id);
    EXPECT_EQ(order_layout(r, Placement::Smart), expect);
  }
}

TEST(Layout, BBuffSlotsFollowTheLayout) {
  std::vector<MemRegion> r{MemRegion{RegionId{1}, 0, 2 * kPageSize, 0},
                           MemRegion{RegionId{2}, 4 * kPageSize, 1, 5}};
  const auto b = BBuffLayout::build(r, order_layout(r, Placement::Smart), 8);
  EXPECT_EQ(b.slot_page, (std::vector<PageIndex>{4, 0, 1}));
  EXPECT_EQ(b.slot_of(4), 0u);
  EXPECT_EQ(b.slot_of(1), 2u);
  EXPECT_EQ(b.slot_of(2), kNoSlot);
  EXPECT_EQ(b.slot_of(100), kNoSlot);
  const std::vector<RegionId> bogus{RegionId{9}};
  EXPECT_THROW(BBuffLayout::build(r, bogus, 8), Error);
}
