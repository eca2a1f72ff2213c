#include "optmig/sim_link.hpp"

#include <cmath>

namespace optmig {

std::string_view to_string(Side side) noexcept {
  return side == Side::Source ? "source" : "destination";
}

Nanos LinkModel::serialization_time(std::size_t bytes) const noexcept {
  if (bandwidth <= 0) return Nanos{0};
  return Nanos{static_cast<std::int64_t>(std::llround(double(bytes) * 1e9 / bandwidth))};
}

SimLink::SimLink(sim::EventLoop& loop, LinkModel model) : loop_(loop), model_(model) {
  dirs_[0].from = Side::Source;
  dirs_[1].from = Side::Destination;
}

void SimLink::send(Side from, Frame frame, Priority priority) {
  if (down_) throw Error(ErrorCode::TransportFailure, "link is down");
  Direction& d = dir(from);
  (priority == Priority::Urgent ? d.urgent : d.normal).push_back(std::move(frame));
  if (!d.busy) kick(d);
}

std::size_t SimLink::queued(Side from) const noexcept {
  const Direction& d = dirs_[index(from)];
  return d.urgent.size() + d.normal.size();
}

bool SimLink::idle(Side from) const noexcept {
  const Direction& d = dirs_[index(from)];
  return !d.busy && d.on_wire.empty() && queued(from) == 0;
}

void SimLink::kick(Direction& d) {
  if (down_ || (d.urgent.empty() && d.normal.empty())) return;
  if (d.frames_until_failure) {
    if (*d.frames_until_failure == 0) {
      fail("injected failure on the " + std::string(to_string(d.from)) + " sender");
      return;
    }
    --*d.frames_until_failure;
  }
  auto& q = d.urgent.empty() ? d.normal : d.urgent;
  Frame frame = std::move(q.front());
  q.pop_front();

  std::vector<std::byte> wire = encode_frame(frame);
  ++d.stats.frames;
  d.stats.wire_bytes += wire.size();
  ++d.stats.frames_by_type[static_cast<std::size_t>(frame.type)];
  if (tap_) tap_(d.from, wire);
  if (tamper_) tamper_(d.from, wire);

  d.busy = true;
  const Nanos tx = model_.serialization_time(wire.size());
  const std::uint64_t epoch = epoch_;
  loop_.after(tx, [this, &d, epoch, w = std::move(wire)]() mutable {
    if (epoch != epoch_) return;
    d.busy = false;
    d.on_wire.push_back(std::move(w));
    loop_.after(model_.one_way_latency, [this, &d, epoch] {
      if (epoch == epoch_) deliver(d);
    });
    kick(d);
  });
}

void SimLink::deliver(Direction& d) {
  std::vector<std::byte> wire = std::move(d.on_wire.front());
  d.on_wire.pop_front();
  d.decoder.feed(wire);
  Frame frame;
  for (;;) {
    const DecodeStatus st = d.decoder.next(frame);
    if (st == DecodeStatus::NeedMoreBytes) return;
    if (st == DecodeStatus::ProtocolError) {
      fail("protocol error: " + d.decoder.error());
      return;
    }
    if (d.receiver) d.receiver(std::move(frame));
    if (down_) return;
  }
}

void SimLink::fail(const std::string& reason) {
  if (down_) return;
  down_ = true;
  ++epoch_;
  for (auto& d : dirs_) {
    d.urgent.clear();
    d.normal.clear();
    d.on_wire.clear();
    d.busy = false;
  }
  const Error err(ErrorCode::TransportFailure, reason);
  for (auto& handler : failure_) {
    if (handler) loop_.after(Nanos{0}, [handler, err] { handler(err); });
  }
}

}  // namespace optmig
