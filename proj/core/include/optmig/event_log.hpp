#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "optmig/bitvector.hpp"
#include "optmig/sim_link.hpp"
#include "optmig/types.hpp"

namespace optmig {

enum class EventKind : std::uint8_t {
  Pause,
  Save,     // save_vec bit set
  Send,     // sealed page handed to the link
  Receive,  // sealed page stored in the destination BBuff
  Restore,  // restore_vec bit set after a verified unseal
  Drop,     // slot retired because its region was freed on the destination
  FaultRequest,
  KeyDelivered,
  Resume,
  Done,
  Abort,
  Teardown,
};

std::string_view to_string(EventKind kind) noexcept;
EventKind event_kind_from_string(std::string_view s);

inline constexpr std::uint32_t kNoEventSlot = 0xffffffffu;

struct MigrationEvent {
  std::uint64_t seq = 0;
  Nanos time{0};
  Side side = Side::Source;
  EventKind kind = EventKind::Pause;
  std::uint32_t slot = kNoEventSlot;
  PageIndex page = 0;

  friend bool operator==(const MigrationEvent&, const MigrationEvent&) = default;
};

// Append-only, totally ordered record of one migration.
class EventLog {
 public:
  void append(Nanos time, Side side, EventKind kind, std::uint32_t slot = kNoEventSlot,
              PageIndex page = 0);
  std::span<const MigrationEvent> events() const noexcept { return events_; }
  std::size_t size() const noexcept { return events_.size(); }
  void clear() { events_.clear(); }

  void write_jsonl(const std::filesystem::path& path) const;
  static EventLog read_jsonl(const std::filesystem::path& path);

 private:
  std::vector<MigrationEvent> events_;
};

struct Violation {
  std::uint64_t seq = 0;
  PageIndex page = 0;
  std::string what;
};

struct AuditVerdict {
  std::vector<Violation> violations;
  std::uint64_t pages_saved = 0;
  std::uint64_t pages_sent = 0;
  std::uint64_t pages_restored = 0;

  bool ok() const noexcept { return violations.empty(); }
};

// Checks, per page, that every send follows its save and every restore
// follows a receipt. With the final bit-vectors it also checks completion.
AuditVerdict consistency_audit(std::span<const MigrationEvent> log,
                               const BitVector* save_vec = nullptr,
                               const BitVector* restore_vec = nullptr);

}  // namespace optmig
