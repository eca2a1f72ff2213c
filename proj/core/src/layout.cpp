#include "optmig/layout.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

namespace optmig {

std::string_view to_string(Placement p) noexcept {
  return p == Placement::Smart ? "smart" : "naive";
}

std::vector<RegionId> order_layout(std::span<const MemRegion> regions, Placement placement) {
  std::vector<std::size_t> idx(regions.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (placement == Placement::Smart) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return regions[a].usage_count > regions[b].usage_count;
    });
  }
  std::vector<RegionId> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(regions[i].id);
  return out;
}

BBuffLayout BBuffLayout::build(std::span<const MemRegion> regions,
                               std::span<const RegionId> layout, std::size_t heap_pages) {
  std::unordered_map<std::uint64_t, const MemRegion*> by_id;
  by_id.reserve(regions.size());
  for (const auto& r : regions) by_id.emplace(to_underlying(r.id), &r);

  BBuffLayout out;
  out.page_to_slot.assign(heap_pages, kNoSlot);
  for (RegionId id : layout) {
    auto it = by_id.find(to_underlying(id));
    if (it == by_id.end()) throw Error(ErrorCode::UnknownRegion, "layout names a missing region");
    const MemRegion& r = *it->second;
    for (PageIndex p = r.first_page(); p < r.first_page() + r.page_count(); ++p) {
      if (p >= heap_pages) throw Error(ErrorCode::DecodeError, "region exceeds the heap");
      out.page_to_slot[p] = static_cast<std::uint32_t>(out.slot_page.size());
      out.slot_page.push_back(p);
    }
  }
  return out;
}

}  // namespace optmig
