#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <vector>

#include "optmig/engine.hpp"

namespace optmig {

// Iterative pre-copy over ordinary memory. Rounds ship the pages dirtied
// during the previous round while the source keeps running; once a round
// leaves at most dirty_threshold pages (or max_rounds is hit) the source
// pauses and the remainder goes out in one frozen round.
//
// The destination is prepared up front, so its init cost is off the
// downtime path. It stays non-authoritative until it resumes.
class PreCopyEngine final : public Migration {
 public:
  PreCopyEngine(sim::EventLoop& loop, SimLink& link, Host& source, MigrationOptions options);
  ~PreCopyEngine() override;

  PreCopyEngine(const PreCopyEngine&) = delete;
  PreCopyEngine& operator=(const PreCopyEngine&) = delete;

  // Throws CapabilityUnsupported when the source cannot track dirty pages.
  void start() override;

  bool resumed() const noexcept override { return resumed_; }
  bool finished() const noexcept override { return finished_; }
  bool failed() const noexcept override { return failed_; }
  const MigrationReport& report() const noexcept override { return report_; }
  Host* destination() noexcept override { return dst_.get(); }
  std::unique_ptr<Host> release_destination() override { return std::move(dst_); }

 private:
  struct Outgoing {
    Frame frame;
    bool page = false;
  };

  template <class F>
  void defer(Nanos delay, F&& fn);
  void guarded(const std::function<void()>& fn);
  void log(Side side, EventKind kind, PageIndex page = 0);

  std::vector<PageIndex> live_pages() const;
  std::vector<PageIndex> live_only(std::vector<PageIndex> pages) const;

  void begin_round(std::vector<PageIndex> pages);
  void round_complete();
  void source_paused();
  void begin_final_round();
  void seal_next();
  void pump();
  void source_receive(Frame&& frame);
  void teardown_source();

  void dest_receive(Frame&& frame);
  void dest_enqueue(Nanos cost, std::function<void()> fn);
  void dest_next();
  void dest_install(const Frame& frame);
  void dest_metadata(const std::vector<std::byte>& mbuff);
  void dest_resume();

  void fail(const Error& error);
  void maybe_finish();
  void fill_report();

  sim::EventLoop& loop_;
  SimLink& link_;
  Host& src_host_;
  MigrationOptions options_;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);

  KeyArr keys_;
  std::unique_ptr<KeyDeliveryChannel> channel_;

  // Source side. A nullopt entry in seal_queue_ stands for the metadata.
  std::deque<std::optional<PageIndex>> seal_queue_;
  bool seal_busy_ = false;
  std::deque<Outgoing> send_queue_;
  std::size_t in_flight_ = 0;
  std::size_t round_outstanding_ = 0;
  bool final_round_ = false;
  bool source_torn_down_ = false;
  std::vector<PageIndex> carry_over_;
  Nanos final_sealed_{0};

  // Destination side.
  std::unique_ptr<Host> dst_;
  std::vector<Key> dst_keys_;
  Key dst_master_{};
  std::deque<std::pair<Nanos, std::function<void()>>> dst_queue_;
  bool dst_busy_ = false;
  Nanos done_received_{0};

  MigrationReport report_;
  bool started_ = false;
  bool resumed_ = false;
  bool finished_ = false;
  bool failed_ = false;
};

}  // namespace optmig
