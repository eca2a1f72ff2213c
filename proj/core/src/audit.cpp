#include <unordered_map>

#include "optmig/event_log.hpp"

namespace optmig {
namespace {

struct PageTrack {
  bool saved = false;
  bool sent = false;
  bool received = false;
  bool finished = false;  // restored or dropped
};

bool is_page_event(EventKind k) noexcept {
  switch (k) {
    case EventKind::Save:
    case EventKind::Send:
    case EventKind::Receive:
    case EventKind::Restore:
    case EventKind::Drop:
      return true;
    default:
      return false;
  }
}

}  // namespace

AuditVerdict consistency_audit(std::span<const MigrationEvent> log, const BitVector* save_vec,
                               const BitVector* restore_vec) {
  AuditVerdict v;
  std::unordered_map<PageIndex, PageTrack> pages;
  std::unordered_map<std::uint32_t, PageIndex> slot_page;
  auto flag = [&](const MigrationEvent& e, std::string what) {
    v.violations.push_back(Violation{e.seq, e.page, std::move(what)});
  };

  bool first = true;
  std::uint64_t prev_seq = 0;
  for (const auto& e : log) {
    if (!first && e.seq <= prev_seq) flag(e, "event log is not totally ordered");
    first = false;
    prev_seq = e.seq;
    if (!is_page_event(e.kind)) continue;
    if (e.slot != kNoEventSlot) {
      auto [it, inserted] = slot_page.emplace(e.slot, e.page);
      if (!inserted && it->second != e.page) flag(e, "slot maps to two different pages");
    }
    PageTrack& t = pages[e.page];
    switch (e.kind) {
      case EventKind::Save:
        if (t.saved) flag(e, "page saved twice");
        t.saved = true;
        ++v.pages_saved;
        break;
      case EventKind::Send:
        if (!t.saved) flag(e, "page sent before save_vec was set");
        if (!t.sent) ++v.pages_sent;
        t.sent = true;
        break;
      case EventKind::Receive:
        if (!t.sent) flag(e, "page received before it was sent");
        t.received = true;
        break;
      case EventKind::Restore:
        if (!t.received) flag(e, "restore_vec set before the page was received");
        if (t.finished) flag(e, "page restored twice");
        t.finished = true;
        ++v.pages_restored;
        break;
      case EventKind::Drop:
        if (t.finished) flag(e, "dropped slot was already restored");
        t.finished = true;
        break;
      default:
        break;
    }
  }

  auto check_vec = [&](const BitVector* vec, bool PageTrack::*field, const char* name) {
    if (!vec) return;
    for (std::size_t i = 0; i < vec->size(); ++i) {
      const auto slot = static_cast<std::uint32_t>(i);
      const auto sp = slot_page.find(slot);
      const PageTrack* t = nullptr;
      if (sp != slot_page.end()) {
        auto it = pages.find(sp->second);
        if (it != pages.end()) t = &it->second;
      }
      const PageIndex page = sp == slot_page.end() ? 0 : sp->second;
      if (!vec->test(i)) {
        v.violations.push_back(
            Violation{0, page, std::string(name) + " bit never set for slot " + std::to_string(i)});
      } else if (!t || !(t->*field)) {
        v.violations.push_back(Violation{
            0, page, std::string(name) + " bit set without a log entry, slot " + std::to_string(i)});
      }
    }
  };
  check_vec(save_vec, &PageTrack::saved, "save_vec");
  check_vec(restore_vec, &PageTrack::finished, "restore_vec");
  return v;
}

}  // namespace optmig
