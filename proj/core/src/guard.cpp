#include "optmig/guard.hpp"

#include <spdlog/spdlog.h>

#include <string>

#include "optmig/enclave.hpp"

namespace optmig {

AccessGuard::AccessGuard(OptMgr& heap, GuardOptions options) : heap_(heap), options_(options) {}

AccessOutcome AccessGuard::process_access(Bytes addr, Bytes size, AccessKind kind) {
  ++stats_.accesses;
  AccessOutcome out;
  MemRegion* region = heap_.regions().lookup(addr);
  const bool fits = region && size <= region->end() - addr;
  if (!fits) {
    ++stats_.wild_accesses;
    const std::string msg = "access [" + std::to_string(addr) + ", +" + std::to_string(size) +
                            ") is not inside one live region";
    if (options_.wild_access_fatal) throw Error(ErrorCode::WildAccess, msg);
    spdlog::warn("{}", msg);
    out.valid = false;
    return out;
  }
  out.region = region->id;
  ++region->usage_count;
  if (all_restored_ || size == 0) return out;
  if (kind == AccessKind::Write && !options_.check_writes) return out;

  const PageIndex first = page_of(addr);
  const PageIndex last = page_of(addr + size - 1);
  for (PageIndex p = first; p <= last; ++p) {
    ++out.pages_checked;
    const std::uint32_t slot = p < page_to_slot_.size() ? page_to_slot_[p] : kNoSlot;
    if (slot == kNoSlot) continue;  // allocated after the migration, nothing to pull
    ++bitvector_reads_;
    if (restore_vec_->test(slot)) continue;
    ++out.pages_synchronously_restored;
    if (restorer_->restore_slot(slot)) ++out.network_faults_raised;
  }
  stats_.pages_checked += out.pages_checked;
  stats_.pages_synchronously_restored += out.pages_synchronously_restored;
  stats_.network_faults += out.network_faults_raised;
  return out;
}

void AccessGuard::begin_restore(const BitVector& restore_vec,
                                std::span<const std::uint32_t> page_to_slot,
                                PageRestorer& restorer) {
  restore_vec_ = &restore_vec;
  page_to_slot_ = page_to_slot;
  restorer_ = &restorer;
  all_restored_ = false;
}

void AccessGuard::set_all_restored() {
  if (restore_vec_ && !restore_vec_->all()) {
    throw Error(ErrorCode::PrematureFlag,
                std::to_string(restore_vec_->size() - restore_vec_->count()) +
                    " pages are still unrestored");
  }
  all_restored_ = true;
  restore_vec_ = nullptr;
  page_to_slot_ = {};
  restorer_ = nullptr;
}

Allocation GuardedHeap::malloc(Bytes size) { return heap_.malloc(size); }

void GuardedHeap::free(RegionId id) { heap_.free(id); }

void GuardedHeap::free_at(Bytes offset) { heap_.free_at(offset); }

void GuardedHeap::read(Bytes addr, std::span<std::byte> out) {
  last_ = guard_.process_access(addr, out.size(), AccessKind::Read);
  if (!last_.valid) {
    std::fill(out.begin(), out.end(), std::byte{0});
    return;
  }
  enclave_.read(addr, out);
}

void GuardedHeap::write(Bytes addr, std::span<const std::byte> in) {
  last_ = guard_.process_access(addr, in.size(), AccessKind::Write);
  if (!last_.valid) return;
  enclave_.write(addr, in);
}

}  // namespace optmig
