#pragma once

#include <array>
#include <deque>
#include <functional>
#include <optional>
#include <string>

#include "optmig/error.hpp"
#include "optmig/frame.hpp"
#include "optmig/sim/event_loop.hpp"

namespace optmig {

enum class Side : std::uint8_t { Source, Destination };
enum class Priority : std::uint8_t { Urgent, Normal };
enum class LinkMode : std::uint8_t { Real, Simulated };

inline constexpr Side peer_of(Side s) noexcept {
  return s == Side::Source ? Side::Destination : Side::Source;
}
std::string_view to_string(Side side) noexcept;

struct LinkModel {
  double bandwidth = 125e6;  // bytes per second (gigabit)
  Nanos one_way_latency{25'000};
  LinkMode mode = LinkMode::Simulated;

  // Time to clock `bytes` onto the wire.
  Nanos serialization_time(std::size_t bytes) const noexcept;
};

struct DirectionStats {
  std::uint64_t frames = 0;
  std::uint64_t wire_bytes = 0;
  std::array<std::uint64_t, 10> frames_by_type{};

  std::uint64_t count(FrameType t) const noexcept {
    return frames_by_type[static_cast<std::size_t>(t)];
  }
};

// In-process duplex link on the virtual clock. Each direction has one
// transmitter: a frame occupies it for size/bandwidth, then arrives one
// latency later. Urgent frames jump the send queue but never overtake a
// frame already on the wire; within a priority class order is FIFO.
class SimLink {
 public:
  using Receiver = std::function<void(Frame&&)>;
  using FailureHandler = std::function<void(const Error&)>;
  using Tap = std::function<void(Side from, std::span<const std::byte> wire)>;
  using Tamper = std::function<void(Side from, std::vector<std::byte>& wire)>;

  SimLink(sim::EventLoop& loop, LinkModel model);

  SimLink(const SimLink&) = delete;
  SimLink& operator=(const SimLink&) = delete;

  // Frames that arrive at `at`.
  void set_receiver(Side at, Receiver fn) { dir(peer_of(at)).receiver = std::move(fn); }
  void set_failure_handler(Side at, FailureHandler fn) { failure_[index(at)] = std::move(fn); }
  void set_tap(Tap fn) { tap_ = std::move(fn); }
  void set_tamper(Tamper fn) { tamper_ = std::move(fn); }

  // Throws TransportFailure once the link is down.
  void send(Side from, Frame frame, Priority priority = Priority::Normal);

  // Tears the link down; both failure handlers run at the current instant.
  void fail(const std::string& reason);
  // The link goes down instead of transmitting frame n+1 from `from`.
  void fail_after_frames(Side from, std::uint64_t n) { dir(from).frames_until_failure = n; }
  bool down() const noexcept { return down_; }

  const LinkModel& model() const noexcept { return model_; }
  const DirectionStats& stats(Side from) const noexcept { return dirs_[index(from)].stats; }
  std::size_t queued(Side from) const noexcept;
  bool idle(Side from) const noexcept;

 private:
  struct Direction {
    Side from = Side::Source;
    std::deque<Frame> urgent;
    std::deque<Frame> normal;
    bool busy = false;
    std::deque<std::vector<std::byte>> on_wire;
    FrameDecoder decoder;
    Receiver receiver;
    DirectionStats stats;
    std::optional<std::uint64_t> frames_until_failure;
  };

  static std::size_t index(Side s) noexcept { return static_cast<std::size_t>(s); }
  Direction& dir(Side from) noexcept { return dirs_[index(from)]; }
  void kick(Direction& d);
  void deliver(Direction& d);

  sim::EventLoop& loop_;
  LinkModel model_;
  std::array<Direction, 2> dirs_;
  std::array<FailureHandler, 2> failure_;
  Tap tap_;
  Tamper tamper_;
  bool down_ = false;
  std::uint64_t epoch_ = 0;
};

}  // namespace optmig
