#include "optmig/enclave.hpp"

#include <algorithm>
#include <cstring>
#include <string>

namespace optmig {

std::string_view to_string(Phase phase) noexcept {
  switch (phase) {
    case Phase::Fresh: return "Fresh";
    case Phase::Running: return "Running";
    case Phase::Paused: return "Paused";
    case Phase::Saving: return "Saving";
    case Phase::Restoring: return "Restoring";
    case Phase::Drained: return "Drained";
  }
  return "?";
}

void EnclaveConfig::validate() const {
  if (!is_page_multiple(max_heap_bytes) || !is_page_multiple(committed_bytes)) {
    throw Error(ErrorCode::ConfigInvalid, "heap sizes must be multiples of 4096 bytes");
  }
  if (committed_bytes > max_heap_bytes) {
    throw Error(ErrorCode::ConfigInvalid, "committed_bytes exceeds max_heap_bytes");
  }
  if (per_page_add_cost.count() < 0) {
    throw Error(ErrorCode::ConfigInvalid, "negative per-page add cost");
  }
}

Enclave::Enclave(EnclaveConfig config) : config_(config) {
  config_.validate();
  const std::size_t pages = config_.heap_pages();
  data_.resize(pages);
  dirty_.assign(pages, 0);
  if (config_.kind == MemoryKind::Plain) {
    // Ordinary process memory: everything is usable and nothing is added.
    states_.assign(pages, PageState::Free);
    return;
  }
  const std::size_t committed = config_.committed_pages();
  states_.assign(pages, PageState::Pending);
  std::fill_n(states_.begin(), committed, PageState::Free);
  counters_.eadd = committed;
  init_time_ = InitCostModel{config_.per_page_add_cost}.init_time(config_.committed_bytes);
}

PageState Enclave::state(PageIndex page) const {
  if (page >= states_.size()) throw Error(ErrorCode::WildAccess, "page index out of range");
  return states_[page];
}

bool Enclave::in_use(PageIndex page) const {
  const PageState s = state(page);
  return s == PageState::Committed || s == PageState::Added;
}

Phase Enclave::phase() const {
  std::scoped_lock lock(mu_);
  return phase_;
}

void Enclave::transition(Phase next) {
  std::scoped_lock lock(mu_);
  const Phase cur = phase_;
  const bool ok = (cur == Phase::Fresh && next == Phase::Running) ||
                  (cur == Phase::Running && next == Phase::Paused) ||
                  (cur == Phase::Paused && next == Phase::Saving) ||
                  (cur == Phase::Saving && next == Phase::Drained) ||
                  (cur == Phase::Fresh && next == Phase::Restoring) ||
                  (cur == Phase::Restoring && next == Phase::Running);
  if (!ok) {
    throw Error(ErrorCode::InvalidPhaseTransition,
                std::string(to_string(cur)) + " -> " + std::string(to_string(next)));
  }
  phase_ = next;
}

void Enclave::resume_after_abort() {
  std::scoped_lock lock(mu_);
  if (phase_ != Phase::Paused && phase_ != Phase::Saving) {
    throw Error(ErrorCode::InvalidPhaseTransition,
                "only a paused or saving enclave can be resumed after an abort");
  }
  phase_ = Phase::Running;
  pause_requested_ = false;
}

EdmmCounters Enclave::counters() const {
  std::scoped_lock lock(mu_);
  return counters_;
}

void Enclave::take_page(PageIndex page) {
  PageState& s = states_[page];
  if (s == PageState::Free) {
    s = PageState::Committed;
  } else {
    s = PageState::Added;
    std::scoped_lock lock(mu_);
    ++counters_.eaug;
  }
  if (tracking_) mark_dirty(page);
}

std::vector<PageIndex> Enclave::alloc_pages(std::size_t n) {
  std::vector<PageIndex> picked;
  picked.reserve(n);
  for (PageIndex p = 0; p < states_.size() && picked.size() < n; ++p) {
    if (states_[p] == PageState::Free) picked.push_back(p);
  }
  for (PageIndex p = 0; p < states_.size() && picked.size() < n; ++p) {
    if (states_[p] == PageState::Pending) picked.push_back(p);
  }
  if (picked.size() < n) {
    throw Error(ErrorCode::OutOfEnclaveMemory,
                "requested " + std::to_string(n) + " pages, " + std::to_string(picked.size()) +
                    " available");
  }
  for (PageIndex p : picked) take_page(p);
  return picked;
}

void Enclave::alloc_range(PageIndex first, std::size_t count) {
  if (first + count > states_.size() || first + count < first) {
    throw Error(ErrorCode::OutOfEnclaveMemory, "range exceeds the enclave heap");
  }
  for (PageIndex p = first; p < first + count; ++p) {
    if (in_use(p)) throw Error(ErrorCode::OutOfEnclaveMemory, "page already in use");
  }
  for (PageIndex p = first; p < first + count; ++p) take_page(p);
}

bool Enclave::ensure_backed(PageIndex page) {
  const PageState s = state(page);
  if (s == PageState::Committed || s == PageState::Added) return false;
  take_page(page);
  return s == PageState::Pending;
}

void Enclave::free_pages(std::span<const PageIndex> pages) {
  for (PageIndex p : pages) {
    const PageState s = state(p);
    if (s == PageState::Free || s == PageState::Pending) {
      throw Error(ErrorCode::DoubleFree, "page " + std::to_string(p) + " is not allocated");
    }
  }
  std::uint64_t removed = 0;
  for (PageIndex p : pages) {
    if (states_[p] == PageState::Committed) {
      states_[p] = PageState::Free;
    } else {
      states_[p] = PageState::Pending;
      ++removed;
    }
    data_[p].reset();
    dirty_[p] = 0;
  }
  std::scoped_lock lock(mu_);
  counters_.eremove += removed;
}

void Enclave::check_range(Bytes offset, Bytes size) const {
  if (offset > config_.max_heap_bytes || size > config_.max_heap_bytes - offset) {
    throw Error(ErrorCode::WildAccess, "access outside the enclave heap");
  }
}

void Enclave::check_readable(PageIndex page) const {
  if (states_[page] == PageState::Pending) {
    throw Error(ErrorCode::UnreadablePage,
                "page " + std::to_string(page) + " is uncommitted and holds no data");
  }
}

Page& Enclave::materialize(PageIndex page) {
  auto& slot = data_[page];
  if (!slot) slot = std::make_unique<Page>(Page{});
  return *slot;
}

void Enclave::mark_dirty(PageIndex page) { dirty_[page] = 1; }

void Enclave::read(Bytes offset, std::span<std::byte> out) const {
  check_range(offset, out.size());
  std::size_t done = 0;
  while (done < out.size()) {
    const Bytes at = offset + done;
    const PageIndex page = page_of(at);
    const std::size_t in_page = at % kPageSize;
    const std::size_t n = std::min(out.size() - done, kPageSize - in_page);
    check_readable(page);
    if (const auto& slot = data_[page]) {
      std::memcpy(out.data() + done, slot->data() + in_page, n);
    } else {
      std::memset(out.data() + done, 0, n);
    }
    done += n;
  }
}

void Enclave::write(Bytes offset, std::span<const std::byte> in) {
  check_range(offset, in.size());
  std::size_t done = 0;
  while (done < in.size()) {
    const Bytes at = offset + done;
    const PageIndex page = page_of(at);
    const std::size_t in_page = at % kPageSize;
    const std::size_t n = std::min(in.size() - done, kPageSize - in_page);
    check_readable(page);
    std::memcpy(materialize(page).data() + in_page, in.data() + done, n);
    if (tracking_) mark_dirty(page);
    done += n;
  }
}

void Enclave::copy_page(PageIndex page, std::span<std::byte, kPageSize> out) const {
  check_readable(page);
  if (const auto& slot = data_[page]) {
    std::memcpy(out.data(), slot->data(), kPageSize);
  } else {
    std::memset(out.data(), 0, kPageSize);
  }
}

void Enclave::install_page(PageIndex page, std::span<const std::byte, kPageSize> in) {
  (void)state(page);
  check_readable(page);
  if (tracking_) mark_dirty(page);
  // A lazily zero page stays lazy when the installed content is all zeros.
  if (!data_[page] && std::all_of(in.begin(), in.end(), [](std::byte b) { return b == std::byte{0}; })) {
    return;
  }
  std::memcpy(materialize(page).data(), in.data(), kPageSize);
}

void Enclave::discard_page(PageIndex page) {
  if (in_use(page)) throw Error(ErrorCode::ConfigInvalid, "discard_page on a page in use");
  data_[page].reset();
}

bool Enclave::page_materialized(PageIndex page) const { return data_.at(page) != nullptr; }

void Enclave::zeroize() {
  for (auto& slot : data_) {
    if (slot) {
      // Scrub before release so nothing lingers in the freed allocation.
      volatile std::byte* p = slot->data();
      for (std::size_t i = 0; i < kPageSize; ++i) p[i] = std::byte{0};
      slot.reset();
    }
  }
  std::uint64_t removed = 0;
  for (auto& s : states_) {
    if (s == PageState::Committed) s = PageState::Free;
    if (s == PageState::Added) {
      s = PageState::Pending;
      ++removed;
    }
  }
  std::scoped_lock lock(mu_);
  counters_.eremove += removed;
}

void Enclave::start_dirty_tracking() {
  if (!supports_dirty_tracking()) {
    throw Error(ErrorCode::CapabilityUnsupported,
                "soft-dirty bits are not maintained for enclave-backed memory");
  }
  std::fill(dirty_.begin(), dirty_.end(), 0);
  tracking_ = true;
}

void Enclave::stop_dirty_tracking() { tracking_ = false; }

std::vector<PageIndex> Enclave::collect_dirty() {
  std::vector<PageIndex> out;
  for (PageIndex p = 0; p < dirty_.size(); ++p) {
    if (dirty_[p]) {
      out.push_back(p);
      dirty_[p] = 0;
    }
  }
  return out;
}

void Enclave::begin_ecall() {
  std::scoped_lock lock(mu_);
  if (phase_ != Phase::Running || pause_requested_) {
    throw Error(ErrorCode::EnclaveNotRunning,
                "ECALL rejected in phase " + std::string(to_string(phase_)));
  }
  ++ecalls_in_flight_;
}

void Enclave::end_ecall() {
  std::function<void()> cb;
  {
    std::scoped_lock lock(mu_);
    --ecalls_in_flight_;
    if (ecalls_in_flight_ == 0) {
      idle_cv_.notify_all();
      if (pause_requested_ && on_paused_) {
        phase_ = Phase::Paused;
        pause_requested_ = false;
        cb = std::move(on_paused_);
        on_paused_ = nullptr;
      }
    }
  }
  if (cb) cb();
}

bool Enclave::in_ecall() const {
  std::scoped_lock lock(mu_);
  return ecalls_in_flight_ > 0;
}

bool Enclave::pause_pending() const {
  std::scoped_lock lock(mu_);
  return pause_requested_;
}

void Enclave::request_pause(std::function<void()> on_paused) {
  {
    std::scoped_lock lock(mu_);
    if (phase_ != Phase::Running || pause_requested_) {
      throw Error(ErrorCode::InvalidPhaseTransition,
                  "pause requested in phase " + std::string(to_string(phase_)));
    }
    if (ecalls_in_flight_ > 0) {
      pause_requested_ = true;
      on_paused_ = std::move(on_paused);
      return;
    }
    phase_ = Phase::Paused;
  }
  if (on_paused) on_paused();
}

void Enclave::pause() {
  std::unique_lock lock(mu_);
  if (phase_ != Phase::Running || pause_requested_) {
    throw Error(ErrorCode::InvalidPhaseTransition,
                "pause requested in phase " + std::string(to_string(phase_)));
  }
  pause_requested_ = true;
  idle_cv_.wait(lock, [this] { return ecalls_in_flight_ == 0; });
  pause_requested_ = false;
  phase_ = Phase::Paused;
}

}  // namespace optmig
