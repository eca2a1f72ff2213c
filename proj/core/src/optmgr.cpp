#include "optmig/optmgr.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "optmig/bytes.hpp"

namespace optmig {

// ---------------------------------------------------------------------------
// MemArr
// ---------------------------------------------------------------------------

void MemArr::append(const MemRegion& region) {
  regions_.push_back(region);
  if (strategy_ == LookupStrategy::Interval) by_offset_.emplace(region.offset, regions_.size() - 1);
}

void MemArr::erase(RegionId id) {
  auto it = std::find_if(regions_.begin(), regions_.end(),
                         [id](const MemRegion& r) { return r.id == id; });
  if (it == regions_.end()) {
    throw Error(ErrorCode::UnknownRegion, "region " + std::to_string(to_underlying(id)));
  }
  regions_.erase(it);
  reindex();
}

void MemArr::clear() {
  regions_.clear();
  by_offset_.clear();
}

void MemArr::reindex() {
  if (strategy_ != LookupStrategy::Interval) return;
  by_offset_.clear();
  for (std::size_t i = 0; i < regions_.size(); ++i) by_offset_.emplace(regions_[i].offset, i);
}

std::optional<std::size_t> MemArr::index_of(Bytes addr) const {
  if (strategy_ == LookupStrategy::Interval) {
    auto it = by_offset_.upper_bound(addr);
    if (it == by_offset_.begin()) return std::nullopt;
    --it;
    if (regions_[it->second].contains(addr)) return it->second;
    return std::nullopt;
  }
  for (std::size_t i = 0; i < regions_.size(); ++i) {
    if (regions_[i].contains(addr)) return i;
  }
  return std::nullopt;
}

const MemRegion* MemArr::lookup(Bytes addr) const {
  auto i = index_of(addr);
  return i ? &regions_[*i] : nullptr;
}

MemRegion* MemArr::lookup(Bytes addr) {
  auto i = index_of(addr);
  return i ? &regions_[*i] : nullptr;
}

const MemRegion* MemArr::find(RegionId id) const {
  for (const auto& r : regions_) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

MemRegion* MemArr::find(RegionId id) {
  for (auto& r : regions_) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------
// Metadata codec
// ---------------------------------------------------------------------------

std::vector<std::byte> encode_metadata(const HeapMetadata& meta) {
  std::vector<std::byte> out;
  out.reserve(4 + 8 + meta.regions.size() * 40 + 16 + meta.data_segment.size() +
              meta.bss_segment.size());
  ByteWriter w(out);
  w.u32(meta.version);
  w.u64(meta.regions.size());
  for (const auto& r : meta.regions) {
    w.u64(to_underlying(r.id));
    w.u64(r.offset);
    w.u64(r.size);
    w.u64(r.usage_count);
  }
  for (RegionId id : meta.layout) w.u64(to_underlying(id));
  w.u64(meta.data_segment.size());
  w.bytes(meta.data_segment);
  w.u64(meta.bss_segment.size());
  w.bytes(meta.bss_segment);
  return out;
}

HeapMetadata decode_metadata(std::span<const std::byte> blob) {
  ByteReader r(blob);
  HeapMetadata meta;
  meta.version = r.u32();
  if (meta.version != HeapMetadata::kVersion) {
    throw Error(ErrorCode::DecodeError, "unsupported metadata version " + std::to_string(meta.version));
  }
  const std::uint64_t n = r.u64();
  // Each record is 40 bytes (32 + an 8-byte layout entry); reject counts the
  // blob cannot possibly hold before reserving anything.
  if (n > r.remaining() / 40) throw Error(ErrorCode::DecodeError, "region count exceeds blob");
  meta.regions.reserve(n);
  std::set<std::uint64_t> ids;
  for (std::uint64_t i = 0; i < n; ++i) {
    MemRegion reg;
    reg.id = RegionId{r.u64()};
    reg.offset = r.u64();
    reg.size = r.u64();
    reg.usage_count = r.u64();
    if (reg.size == 0 || reg.offset % kPageSize != 0 || reg.offset + reg.size < reg.offset) {
      throw Error(ErrorCode::DecodeError, "malformed region record");
    }
    if (!ids.insert(to_underlying(reg.id)).second) {
      throw Error(ErrorCode::DecodeError, "duplicate region id");
    }
    meta.regions.push_back(reg);
  }
  std::set<std::uint64_t> seen;
  meta.layout.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t id = r.u64();
    if (!ids.contains(id) || !seen.insert(id).second) {
      throw Error(ErrorCode::DecodeError, "layout is not a permutation of the region table");
    }
    meta.layout.push_back(RegionId{id});
  }
  auto data = r.bytes(r.u64());
  meta.data_segment.assign(data.begin(), data.end());
  auto bss = r.bytes(r.u64());
  meta.bss_segment.assign(bss.begin(), bss.end());
  if (!r.done()) throw Error(ErrorCode::DecodeError, "trailing bytes after metadata");

  std::vector<MemRegion> sorted = meta.regions;
  std::sort(sorted.begin(), sorted.end(),
            [](const MemRegion& a, const MemRegion& b) { return a.offset < b.offset; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const Bytes prev_end = sorted[i - 1].offset + sorted[i - 1].page_count() * kPageSize;
    if (sorted[i].offset < prev_end) throw Error(ErrorCode::DecodeError, "overlapping regions");
  }
  return meta;
}

// ---------------------------------------------------------------------------
// OptMgr
// ---------------------------------------------------------------------------

OptMgr::OptMgr(Enclave& enclave, SegmentSizes segments, LookupStrategy lookup)
    : enclave_(enclave),
      regions_(lookup),
      data_(segments.data_bytes),
      bss_(segments.bss_bytes) {
  if (enclave_.page_count() > 0) free_runs_.emplace(0, enclave_.page_count());
}

void OptMgr::reserve_run(PageIndex first, std::size_t count) {
  auto it = free_runs_.upper_bound(first);
  if (it == free_runs_.begin()) throw Error(ErrorCode::OutOfEnclaveMemory, "range not free");
  --it;
  const PageIndex run_start = it->first;
  const std::size_t run_len = it->second;
  if (first + count > run_start + run_len) {
    throw Error(ErrorCode::OutOfEnclaveMemory, "range not free");
  }
  free_runs_.erase(it);
  if (first > run_start) free_runs_.emplace(run_start, first - run_start);
  const PageIndex tail = first + count;
  if (tail < run_start + run_len) free_runs_.emplace(tail, run_start + run_len - tail);
}

void OptMgr::release_run(PageIndex first, std::size_t count) {
  PageIndex start = first;
  std::size_t len = count;
  auto next = free_runs_.lower_bound(first);
  if (next != free_runs_.end() && next->first == first + count) {
    len += next->second;
    next = free_runs_.erase(next);
  }
  if (next != free_runs_.begin()) {
    auto prev = std::prev(next);
    if (prev->first + prev->second == first) {
      start = prev->first;
      len += prev->second;
      free_runs_.erase(prev);
    }
  }
  free_runs_.emplace(start, len);
}

// The heap is frozen from the pause on; a source that resumes after an abort
// is Running again and may allocate.
void OptMgr::check_mutable(const char* op) const {
  const Phase ph = enclave_.phase();
  if (ph == Phase::Paused || ph == Phase::Saving || ph == Phase::Drained) {
    throw Error(ErrorCode::EnclaveNotRunning,
                std::string(op) + " while the enclave is " + std::string(to_string(ph)));
  }
}

Allocation OptMgr::malloc(Bytes size) {
  check_mutable("malloc");
  if (size == 0) throw Error(ErrorCode::ConfigInvalid, "malloc of zero bytes");
  const std::size_t need = pages_for(size);
  auto it = std::find_if(free_runs_.begin(), free_runs_.end(),
                         [need](const auto& run) { return run.second >= need; });
  if (it == free_runs_.end()) {
    throw Error(ErrorCode::OutOfEnclaveMemory,
                "no free run of " + std::to_string(need) + " pages");
  }
  const PageIndex first = it->first;
  enclave_.alloc_range(first, need);
  reserve_run(first, need);

  MemRegion region;
  region.id = RegionId{next_id_++};
  region.offset = first * kPageSize;
  region.size = size;
  regions_.append(region);
  return {region.id, region.offset};
}

void OptMgr::free(RegionId id) {
  check_mutable("free");
  release(id);
}

void OptMgr::release_all() {
  std::vector<RegionId> ids;
  for (const auto& r : regions_.regions()) ids.push_back(r.id);
  for (RegionId id : ids) release(id);
}

void OptMgr::release(RegionId id) {
  const MemRegion* found = regions_.find(id);
  if (!found) throw Error(ErrorCode::UnknownRegion, "region " + std::to_string(to_underlying(id)));
  const MemRegion region = *found;
  if (on_free_) on_free_(region);
  std::vector<PageIndex> backed;
  for (PageIndex p = region.first_page(); p < region.first_page() + region.page_count(); ++p) {
    // On a destination some pages may not have been restored (and backed) yet.
    if (enclave_.in_use(p)) backed.push_back(p);
  }
  enclave_.free_pages(backed);
  release_run(region.first_page(), region.page_count());
  regions_.erase(id);
}

void OptMgr::free_at(Bytes offset) {
  const MemRegion* r = regions_.lookup(offset);
  if (!r || r->offset != offset) {
    throw Error(ErrorCode::UnknownRegion, "no region starts at offset " + std::to_string(offset));
  }
  free(r->id);
}

HeapMetadata OptMgr::snapshot(std::span<const RegionId> layout) const {
  HeapMetadata meta;
  meta.regions.assign(regions_.regions().begin(), regions_.regions().end());
  meta.layout.assign(layout.begin(), layout.end());
  meta.data_segment.assign(data_.begin(), data_.end());
  meta.bss_segment.assign(bss_.begin(), bss_.end());
  return meta;
}

std::vector<std::byte> OptMgr::serialize_metadata(std::span<const RegionId> layout) const {
  if (layout.size() != regions_.size()) {
    throw Error(ErrorCode::ConfigInvalid, "layout must list every live region exactly once");
  }
  return encode_metadata(snapshot(layout));
}

const MemArr& OptMgr::restore_metadata(std::span<const std::byte> blob) {
  return restore_metadata(decode_metadata(blob));
}

const MemArr& OptMgr::restore_metadata(const HeapMetadata& meta) {
  if (!regions_.empty()) {
    throw Error(ErrorCode::ConfigInvalid, "metadata can only be restored into an empty heap");
  }
  const Bytes heap = enclave_.config().max_heap_bytes;
  for (const auto& r : meta.regions) {
    if (r.offset + r.page_count() * kPageSize > heap) {
      throw Error(ErrorCode::DecodeError, "region exceeds the destination heap");
    }
  }
  std::uint64_t max_id = 0;
  for (const auto& r : meta.regions) {
    reserve_run(r.first_page(), r.page_count());
    MemRegion fresh = r;
    fresh.usage_count = 0;
    regions_.append(fresh);
    max_id = std::max(max_id, to_underlying(r.id));
  }
  next_id_ = std::max(next_id_, max_id + 1);
  data_ = meta.data_segment;
  bss_ = meta.bss_segment;
  previous_layout_ = meta.layout;
  return regions_;
}

}  // namespace optmig
