#include "optmig/sim/event_loop.hpp"

#include <algorithm>
#include <thread>

namespace optmig::sim {

EventLoop::EventLoop(Options options) : options_(options), rng_(options.seed) {}

EventId EventLoop::at(Time when, std::function<void()> fn) {
  const EventId id = next_id_++;
  const std::uint64_t tie = options_.shuffle_ties ? rng_() : 0;
  queue_.push(Event{std::max(when, now_), tie, id, std::move(fn)});
  return id;
}

void EventLoop::cancel(EventId id) {
  if (id > 0 && id < next_id_) cancelled_.insert(id);
}

void EventLoop::drop_cancelled() {
  while (!queue_.empty() && !cancelled_.empty()) {
    auto it = cancelled_.find(queue_.top().id);
    if (it == cancelled_.end()) return;
    cancelled_.erase(it);
    queue_.pop();
  }
}

void EventLoop::move_clock(Time to) {
  if (to <= now_) return;
  if (options_.real_time_scale > 0) {
    std::this_thread::sleep_for(
        Nanos{static_cast<std::int64_t>(double((to - now_).count()) * options_.real_time_scale)});
  }
  now_ = to;
}

bool EventLoop::step() {
  drop_cancelled();
  if (!queue_.empty()) {
    Event ev = std::move(const_cast<Event&>(queue_.top()));
    queue_.pop();
    move_clock(ev.when);
    ++dispatched_;
    ++depth_;
    struct Leave {
      int& d;
      ~Leave() { --d; }
    } leave{depth_};
    ev.fn();
    return true;
  }
  return false;
}

void EventLoop::run() {
  while (step()) {
  }
}

bool EventLoop::run_until(const std::function<bool()>& pred) {
  while (!pred()) {
    if (!step()) return pred();
  }
  return true;
}

void EventLoop::advance(Nanos d) {
  const Time target = now_ + d;
  for (;;) {
    drop_cancelled();
    if (queue_.empty() || queue_.top().when > target) break;
    step();
  }
  move_clock(target);
}

Nanos EventLoop::jitter() {
  if (options_.jitter.count() <= 0) return Nanos{0};
  std::uniform_int_distribution<std::int64_t> dist(0, options_.jitter.count());
  return Nanos{dist(rng_)};
}

}  // namespace optmig::sim
