#include "optmig/event_log.hpp"

#include <fstream>
#include "json.hpp"

#include "optmig/error.hpp"

namespace optmig {
namespace {

constexpr std::string_view kKindNames[] = {
    "pause", "save", "send", "receive", "restore", "drop",
    "fault_request", "key_delivered", "resume", "done", "abort", "teardown",
};

bool carries_page(EventKind k) noexcept {
  return k != EventKind::Pause && k != EventKind::KeyDelivered && k != EventKind::Resume &&
         k != EventKind::Done && k != EventKind::Abort && k != EventKind::Teardown;
}

}  // namespace

std::string_view to_string(EventKind kind) noexcept {
  return kKindNames[static_cast<std::size_t>(kind)];
}

EventKind event_kind_from_string(std::string_view s) {
  for (std::size_t i = 0; i < std::size(kKindNames); ++i) {
    if (kKindNames[i] == s) return static_cast<EventKind>(i);
  }
  throw Error(ErrorCode::DecodeError, "unknown event kind " + std::string(s));
}

void EventLog::append(Nanos time, Side side, EventKind kind, std::uint32_t slot, PageIndex page) {
  events_.push_back(MigrationEvent{events_.size(), time, side, kind, slot, page});
}

void EventLog::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::ConfigInvalid, "cannot write " + path.string());
  for (const auto& e : events_) {
    nlohmann::json j = {
        {"seq", e.seq},
        {"t_ns", e.time.count()},
        {"side", std::string(to_string(e.side))},
        {"kind", std::string(to_string(e.kind))},
    };
    if (e.slot != kNoEventSlot) j["slot"] = e.slot;
    // Pages can arrive before the destination knows their slot.
    if (e.slot != kNoEventSlot || carries_page(e.kind)) j["page"] = e.page;
    out << j.dump() << '\n';
  }
}

EventLog EventLog::read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot read " + path.string());
  EventLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MigrationEvent e;
      e.seq = j.at("seq").get<std::uint64_t>();
      e.time = Nanos{j.at("t_ns").get<std::int64_t>()};
      const auto side = j.at("side").get<std::string>();
      if (side != "source" && side != "destination") throw Error(ErrorCode::DecodeError, "side");
      e.side = side == "source" ? Side::Source : Side::Destination;
      e.kind = event_kind_from_string(j.at("kind").get<std::string>());
      if (j.contains("slot")) e.slot = j.at("slot").get<std::uint32_t>();
      if (j.contains("page")) e.page = j.at("page").get<std::uint64_t>();
      log.events_.push_back(e);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::DecodeError,
                  path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return log;
}

}  // namespace optmig
