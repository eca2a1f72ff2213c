#pragma once

#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string_view>
#include <type_traits>
#include <vector>

#include "optmig/error.hpp"
#include "optmig/types.hpp"

namespace optmig {

// Simulated EADD/EAUG cost: 1 GiB of committed memory initializes in ~2000 ms.
inline constexpr Nanos kDefaultPerPageAddCost{7629};

enum class MemoryKind : std::uint8_t {
  // Secure memory: no soft-dirty bits, no userfaultfd registration.
  EnclaveBacked,
  // Ordinary anonymous memory, the kind pre-copy and plain post-copy rely on.
  Plain,
};

struct EnclaveConfig {
  Bytes max_heap_bytes = 0;
  Bytes committed_bytes = 0;
  Nanos per_page_add_cost = kDefaultPerPageAddCost;
  MemoryKind kind = MemoryKind::EnclaveBacked;

  void validate() const;
  std::size_t heap_pages() const noexcept { return max_heap_bytes / kPageSize; }
  std::size_t committed_pages() const noexcept { return committed_bytes / kPageSize; }
};

struct InitCostModel {
  Nanos per_page_add_cost = kDefaultPerPageAddCost;

  Nanos init_time(Bytes committed_bytes) const noexcept {
    return per_page_add_cost * static_cast<std::int64_t>(committed_bytes / kPageSize);
  }
};

enum class PageState : std::uint8_t {
  Free,       // committed at init, currently unallocated
  Committed,  // committed at init, in use
  Added,      // obtained through EAUG, in use
  Pending,    // uncommitted; holds no data and cannot be read
};

enum class Phase : std::uint8_t { Fresh, Running, Paused, Saving, Restoring, Drained };

std::string_view to_string(Phase phase) noexcept;

struct EdmmCounters {
  std::uint64_t eadd = 0;
  std::uint64_t eaug = 0;  // EAUG and the paired EACCEPT
  std::uint64_t eremove = 0;
};

// Page-granular simulated enclave. Page contents are materialized lazily, so
// an in-use page that was never written reads back as zeros.
class Enclave {
 public:
  explicit Enclave(EnclaveConfig config);

  Enclave(const Enclave&) = delete;
  Enclave& operator=(const Enclave&) = delete;

  const EnclaveConfig& config() const noexcept { return config_; }
  std::size_t page_count() const noexcept { return states_.size(); }
  PageState state(PageIndex page) const;
  bool in_use(PageIndex page) const;

  Phase phase() const;
  void transition(Phase next);
  // Rollback path: a migration that failed before the destination became
  // authoritative hands control back to the source.
  void resume_after_abort();

  Nanos init_time() const noexcept { return init_time_; }
  EdmmCounters counters() const;

  std::vector<PageIndex> alloc_pages(std::size_t n);
  void alloc_range(PageIndex first, std::size_t count);
  // Backs one page if it is not in use yet. Returns true when that took an EAUG.
  bool ensure_backed(PageIndex page);
  void free_pages(std::span<const PageIndex> pages);

  void read(Bytes offset, std::span<std::byte> out) const;
  void write(Bytes offset, std::span<const std::byte> in);
  void copy_page(PageIndex page, std::span<std::byte, kPageSize> out) const;
  void install_page(PageIndex page, std::span<const std::byte, kPageSize> in);
  // Drops the contents of a page that is not in use.
  void discard_page(PageIndex page);
  // Scrubs every page and releases them to the pool; used for source teardown.
  void zeroize();
  bool page_materialized(PageIndex page) const;

  bool supports_dirty_tracking() const noexcept { return config_.kind == MemoryKind::Plain; }
  bool supports_fault_tracking() const noexcept { return config_.kind == MemoryKind::Plain; }
  void start_dirty_tracking();
  void stop_dirty_tracking();
  // Returns pages written since the previous call and clears the set.
  std::vector<PageIndex> collect_dirty();

  template <class Fn>
  auto ecall(Fn&& fn) -> std::invoke_result_t<Fn&> {
    begin_ecall();
    struct Exit {
      Enclave* self;
      ~Exit() { self->end_ecall(); }
    } exit{this};
    return fn();
  }
  void begin_ecall();
  void end_ecall();
  bool in_ecall() const;

  // Pauses as soon as no ECALL is in flight. The callback runs immediately when
  // the enclave is idle, otherwise on the thread that leaves the last ECALL.
  void request_pause(std::function<void()> on_paused);
  bool pause_pending() const;
  // Blocking variant for threaded callers.
  void pause();

 private:
  void check_range(Bytes offset, Bytes size) const;
  void check_readable(PageIndex page) const;
  Page& materialize(PageIndex page);
  void mark_dirty(PageIndex page);
  void take_page(PageIndex page);

  EnclaveConfig config_;
  Nanos init_time_{0};
  std::vector<PageState> states_;
  std::vector<std::unique_ptr<Page>> data_;
  std::vector<std::uint8_t> dirty_;
  bool tracking_ = false;

  mutable std::mutex mu_;
  std::condition_variable idle_cv_;
  Phase phase_ = Phase::Fresh;
  EdmmCounters counters_;
  int ecalls_in_flight_ = 0;
  bool pause_requested_ = false;
  std::function<void()> on_paused_;
  std::size_t free_hint_ = 0;
};

}  // namespace optmig
