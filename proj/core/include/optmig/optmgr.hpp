#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "optmig/enclave.hpp"
#include "optmig/types.hpp"

namespace optmig {

struct MemRegion {
  RegionId id{};
  Bytes offset = 0;
  Bytes size = 0;
  std::uint64_t usage_count = 0;

  Bytes end() const noexcept { return offset + size; }
  bool contains(Bytes addr) const noexcept { return addr >= offset && addr < end(); }
  PageIndex first_page() const noexcept { return page_of(offset); }
  std::size_t page_count() const noexcept { return pages_for(size); }

  friend bool operator==(const MemRegion&, const MemRegion&) = default;
};

enum class LookupStrategy { Linear, Interval };

#ifdef OPTMIG_INTERVAL_LOOKUP
inline constexpr LookupStrategy kDefaultLookup = LookupStrategy::Interval;
#else
inline constexpr LookupStrategy kDefaultLookup = LookupStrategy::Linear;
#endif

// Live allocations in allocation order. Linear lookup scans the table;
// the interval strategy keeps an ordered offset index next to it.
class MemArr {
 public:
  explicit MemArr(LookupStrategy strategy = kDefaultLookup) : strategy_(strategy) {}

  void append(const MemRegion& region);
  void erase(RegionId id);
  void clear();

  const MemRegion* lookup(Bytes addr) const;
  MemRegion* lookup(Bytes addr);
  const MemRegion* find(RegionId id) const;
  MemRegion* find(RegionId id);

  std::span<const MemRegion> regions() const noexcept { return regions_; }
  std::span<MemRegion> regions() noexcept { return regions_; }
  std::size_t size() const noexcept { return regions_.size(); }
  bool empty() const noexcept { return regions_.empty(); }
  LookupStrategy strategy() const noexcept { return strategy_; }

 private:
  std::optional<std::size_t> index_of(Bytes addr) const;
  void reindex();

  LookupStrategy strategy_;
  std::vector<MemRegion> regions_;
  std::map<Bytes, std::size_t> by_offset_;
};

struct SegmentSizes {
  Bytes data_bytes = 4 * KiB;
  Bytes bss_bytes = 4 * KiB;
};

struct Allocation {
  RegionId id{};
  Bytes offset = 0;
};

// Decoded form of the metadata blob carried in MBuff.
struct HeapMetadata {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::vector<MemRegion> regions;
  std::vector<RegionId> layout;
  std::vector<std::byte> data_segment;
  std::vector<std::byte> bss_segment;

  friend bool operator==(const HeapMetadata&, const HeapMetadata&) = default;
};

// [u32 version][u64 n]{u64 id, u64 offset, u64 size, u64 usage}*n[u64 id]*n
// [u64 data_len][data][u64 bss_len][bss], all little-endian.
std::vector<std::byte> encode_metadata(const HeapMetadata& meta);
HeapMetadata decode_metadata(std::span<const std::byte> blob);

// The in-enclave heap manager. Every allocation takes whole pages, placed
// first-fit over the free page runs, and is recorded in MemArr.
class OptMgr {
 public:
  OptMgr(Enclave& enclave, SegmentSizes segments = {}, LookupStrategy lookup = kDefaultLookup);

  Allocation malloc(Bytes size);
  void free(RegionId id);
  void free_at(Bytes offset);

  const MemArr& regions() const noexcept { return regions_; }
  MemArr& regions() noexcept { return regions_; }
  const MemRegion* lookup(Bytes addr) const { return regions_.lookup(addr); }

  std::span<std::byte> data_segment() noexcept { return data_; }
  std::span<std::byte> bss_segment() noexcept { return bss_; }
  std::span<const std::byte> data_segment() const noexcept { return data_; }
  std::span<const std::byte> bss_segment() const noexcept { return bss_; }

  HeapMetadata snapshot(std::span<const RegionId> layout) const;
  std::vector<std::byte> serialize_metadata(std::span<const RegionId> layout) const;
  // Rebuilds MemArr on a fresh destination; pages are backed later, on restore.
  const MemArr& restore_metadata(std::span<const std::byte> blob);
  const MemArr& restore_metadata(const HeapMetadata& meta);
  // Region order used by the migration this heap was restored from.
  std::span<const RegionId> previous_layout() const noexcept { return previous_layout_; }

  // Frees every region whatever the phase; for tearing down a source whose
  // state now lives elsewhere.
  void release_all();

  // Invoked before a region's pages are released.
  void set_free_observer(std::function<void(const MemRegion&)> fn) { on_free_ = std::move(fn); }

 private:
  void check_mutable(const char* op) const;
  void release(RegionId id);
  void reserve_run(PageIndex first, std::size_t count);
  void release_run(PageIndex first, std::size_t count);

  Enclave& enclave_;
  MemArr regions_;
  std::map<PageIndex, std::size_t> free_runs_;  // start -> length
  std::vector<std::byte> data_;
  std::vector<std::byte> bss_;
  std::vector<RegionId> previous_layout_;
  std::uint64_t next_id_ = 1;
  std::function<void(const MemRegion&)> on_free_;
};

}  // namespace optmig
