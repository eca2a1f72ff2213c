#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "optmig/guard.hpp"
#include "optmig/optmgr.hpp"

namespace optmig {

enum class Placement : std::uint8_t { Naive, Smart };

std::string_view to_string(Placement p) noexcept;

// Naive keeps allocation order. Smart puts the most used regions first and
// breaks ties by allocation order.
std::vector<RegionId> order_layout(std::span<const MemRegion> regions, Placement placement);
inline std::vector<RegionId> order_layout(const MemArr& regions, Placement placement) {
  return order_layout(regions.regions(), placement);
}

// BBuff slots are the pages of the live regions, region by region in layout order.
struct BBuffLayout {
  std::vector<PageIndex> slot_page;
  std::vector<std::uint32_t> page_to_slot;  // kNoSlot for pages outside BBuff

  std::size_t slots() const noexcept { return slot_page.size(); }
  std::uint32_t slot_of(PageIndex page) const noexcept {
    return page < page_to_slot.size() ? page_to_slot[page] : kNoSlot;
  }

  static BBuffLayout build(std::span<const MemRegion> regions, std::span<const RegionId> layout,
                           std::size_t heap_pages);
};

}  // namespace optmig
