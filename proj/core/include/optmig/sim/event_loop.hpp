#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <random>
#include <unordered_set>
#include <vector>

#include "optmig/types.hpp"

namespace optmig::sim {

using Time = Nanos;
using EventId = std::uint64_t;

// Single-threaded discrete-event scheduler over a virtual clock.
//
// Events at the same instant run in an order drawn from the seeded RNG when
// shuffle_ties is on, otherwise in scheduling order. A running event may
// block on a condition through run_until/advance, which dispatch further
// events re-entrantly; this is how a workload step waits for a page.
class EventLoop {
 public:
  struct Options {
    std::uint64_t seed = 0;
    bool shuffle_ties = false;
    // Upper bound for jitter() draws.
    Nanos jitter{0};
    // When > 0, sleeps scale x every clock advance (demo mode).
    double real_time_scale = 0;
  };

  EventLoop() : EventLoop(Options{}) {}
  explicit EventLoop(Options options);

  Time now() const noexcept { return now_; }

  EventId at(Time when, std::function<void()> fn);
  EventId after(Nanos delay, std::function<void()> fn) { return at(now_ + delay, std::move(fn)); }
  void cancel(EventId id);

  // Runs the earliest event; false when nothing is pending.
  bool step();
  void run();
  // Dispatches events until pred() holds or the queue is exhausted.
  bool run_until(const std::function<bool()>& pred);
  // Dispatches events up to now + d, then moves the clock to now + d.
  void advance(Nanos d);

  // Includes cancelled events that have not been popped yet.
  std::size_t pending() const noexcept { return queue_.size(); }
  std::uint64_t dispatched() const noexcept { return dispatched_; }
  int depth() const noexcept { return depth_; }

  // Uniform in [0, options.jitter].
  Nanos jitter();
  std::mt19937_64& rng() noexcept { return rng_; }

 private:
  struct Event {
    Time when;
    std::uint64_t tie;
    EventId id;
    std::function<void()> fn;
  };
  void drop_cancelled();
  void move_clock(Time to);

  struct Later {
    bool operator()(const Event& a, const Event& b) const noexcept {
      if (a.when != b.when) return a.when > b.when;
      if (a.tie != b.tie) return a.tie > b.tie;
      return a.id > b.id;
    }
  };

  Options options_;
  std::mt19937_64 rng_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::unordered_set<EventId> cancelled_;
  Time now_{0};
  EventId next_id_ = 1;
  std::uint64_t dispatched_ = 0;
  int depth_ = 0;
};

}  // namespace optmig::sim
