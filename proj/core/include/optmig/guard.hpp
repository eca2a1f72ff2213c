#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <type_traits>
#include <vector>

#include "optmig/bitvector.hpp"
#include "optmig/optmgr.hpp"

namespace optmig {

enum class AccessKind : std::uint8_t { Read, Write };

struct AccessOutcome {
  RegionId region{};
  bool valid = true;  // false for a tolerated wild access
  std::size_t pages_checked = 0;
  std::size_t pages_synchronously_restored = 0;
  std::size_t network_faults_raised = 0;
};

// Destination-side supplier of pages that have not been restored yet.
class PageRestorer {
 public:
  virtual ~PageRestorer() = default;
  // Returns once BBuff slot `slot` is restored; true if a network fault was raised.
  virtual bool restore_slot(std::size_t slot) = 0;
};

inline constexpr std::uint32_t kNoSlot = 0xffffffffu;

struct GuardOptions {
  // Skipping write checks is only safe for whole-page overwrites.
  bool check_writes = true;
  bool wild_access_fatal = true;
};

struct GuardStats {
  std::uint64_t accesses = 0;
  std::uint64_t pages_checked = 0;
  std::uint64_t pages_synchronously_restored = 0;
  std::uint64_t network_faults = 0;
  std::uint64_t wild_accesses = 0;
};

// The check every instrumented heap access goes through.
class AccessGuard {
 public:
  explicit AccessGuard(OptMgr& heap, GuardOptions options = {});

  AccessOutcome process_access(Bytes addr, Bytes size, AccessKind kind = AccessKind::Read);

  // Arms the slow path on a destination. page_to_slot maps heap pages to
  // BBuff slots and must outlive the restore epoch.
  void begin_restore(const BitVector& restore_vec, std::span<const std::uint32_t> page_to_slot,
                     PageRestorer& restorer);
  // Requires every restore_vec bit to be set; afterwards only usage counts change.
  void set_all_restored();
  bool all_restored() const noexcept { return all_restored_; }

  std::uint64_t bitvector_reads() const noexcept { return bitvector_reads_; }
  const GuardStats& stats() const noexcept { return stats_; }
  const GuardOptions& options() const noexcept { return options_; }

 private:
  OptMgr& heap_;
  GuardOptions options_;
  bool all_restored_ = true;
  const BitVector* restore_vec_ = nullptr;
  std::span<const std::uint32_t> page_to_slot_;
  PageRestorer* restorer_ = nullptr;
  std::uint64_t bitvector_reads_ = 0;
  GuardStats stats_;
};

// The only way workload code touches enclave memory.
class HeapAccess {
 public:
  virtual ~HeapAccess() = default;

  virtual Allocation malloc(Bytes size) = 0;
  virtual void free(RegionId id) = 0;
  virtual void free_at(Bytes offset) = 0;
  virtual void read(Bytes addr, std::span<std::byte> out) = 0;
  virtual void write(Bytes addr, std::span<const std::byte> in) = 0;
  // Globals live in the data segment, outside the tracked heap.
  virtual std::span<std::byte> data_segment() = 0;

  template <class T>
  T load(Bytes addr) {
    static_assert(std::is_trivially_copyable_v<T>);
    T v{};
    read(addr, std::as_writable_bytes(std::span<T, 1>(&v, 1)));
    return v;
  }
  template <class T>
  void store(Bytes addr, const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    write(addr, std::as_bytes(std::span<const T, 1>(&v, 1)));
  }
};

class Enclave;

// HeapAccess that runs process_access ahead of every read and write.
class GuardedHeap final : public HeapAccess {
 public:
  GuardedHeap(Enclave& enclave, OptMgr& heap, AccessGuard& guard)
      : enclave_(enclave), heap_(heap), guard_(guard) {}

  Allocation malloc(Bytes size) override;
  void free(RegionId id) override;
  void free_at(Bytes offset) override;
  void read(Bytes addr, std::span<std::byte> out) override;
  void write(Bytes addr, std::span<const std::byte> in) override;
  std::span<std::byte> data_segment() override { return heap_.data_segment(); }

  const AccessOutcome& last_outcome() const noexcept { return last_; }

 private:
  Enclave& enclave_;
  OptMgr& heap_;
  AccessGuard& guard_;
  AccessOutcome last_;
};

// Binds a step that declares its accesses through HeapAccess to a guarded heap.
template <class R>
std::function<R()> instrument(std::function<R(HeapAccess&)> step, GuardedHeap& heap) {
  return [step = std::move(step), &heap] { return step(heap); };
}

}  // namespace optmig
