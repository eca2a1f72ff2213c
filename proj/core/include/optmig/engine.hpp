#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "optmig/bitvector.hpp"
#include "optmig/event_log.hpp"
#include "optmig/host.hpp"
#include "optmig/layout.hpp"
#include "optmig/report.hpp"
#include "optmig/seal.hpp"
#include "optmig/sim/event_loop.hpp"
#include "optmig/sim_link.hpp"

namespace optmig {

// Accounted CPU costs of the migration managers.
struct CostModel {
  Nanos pause{1'000'000};
  Nanos resume{1'000'000};
  Nanos seal_per_page{3'000};
  Nanos unseal_per_page{3'000};
  Nanos keygen_per_key{10};
  double blob_ns_per_byte = 0.75;  // sealing or unsealing MBuff and the key bundle
  Nanos metadata_per_region{200};
  Nanos fault_service{2'000};

  Nanos blob_cost(std::size_t bytes) const noexcept {
    return Nanos{static_cast<std::int64_t>(double(bytes) * blob_ns_per_byte)};
  }
};

inline constexpr Bytes kDefaultV2CommittedBytes = 105 * MiB;

struct MigrationOptions {
  Protocol protocol = Protocol::PostCopyOptMigV2;
  Placement placement = Placement::Smart;
  std::size_t window = 64;  // background PAGE frames in flight
  Bytes v2_committed_bytes = kDefaultV2CommittedBytes;
  CostModel costs;
  HostOptions destination_host;
  EventLog* log = nullptr;
  // Adds loop jitter to every per-page task step.
  bool jitter_steps = false;
  // Pre-copy: stop iterating once a round leaves this many dirty pages.
  std::size_t dirty_threshold = 64;
  std::size_t max_rounds = 5;
};

// Committed memory the destination enclave is created with.
Bytes destination_committed_bytes(const EnclaveConfig& source, const MigrationOptions& options);

// Common surface of every protocol, as seen by the workload executor.
class Migration {
 public:
  virtual ~Migration() = default;

  virtual void start() = 0;

  // The destination application may run from here on.
  void on_resumed(std::function<void(Host&)> fn) { on_resumed_ = std::move(fn); }
  // source_resumed tells whether the source took control back.
  void on_aborted(std::function<void(const Error&, bool source_resumed)> fn) {
    on_aborted_ = std::move(fn);
  }
  void on_finished(std::function<void()> fn) { on_finished_ = std::move(fn); }

  virtual bool resumed() const noexcept = 0;
  virtual bool finished() const noexcept = 0;
  virtual bool failed() const noexcept = 0;
  virtual const MigrationReport& report() const noexcept = 0;
  virtual Host* destination() noexcept = 0;
  virtual std::unique_ptr<Host> release_destination() = 0;

 protected:
  std::function<void(Host&)> on_resumed_;
  std::function<void(const Error&, bool)> on_aborted_;
  std::function<void()> on_finished_;
};

// Runs stop-and-copy, OptMig V1/V2 or plain post-copy between a source host
// and a destination it creates, over a SimLink on the shared event loop.
//
// Both migration managers live here but only talk through the link and the
// single-delivery key channel. The workload executor drives the source
// enclave; start() asks it to pause at the next ECALL boundary.
class MigrationEngine final : public Migration, private PageRestorer {
 public:
  MigrationEngine(sim::EventLoop& loop, SimLink& link, Host& source, MigrationOptions options);
  ~MigrationEngine() override;

  MigrationEngine(const MigrationEngine&) = delete;
  MigrationEngine& operator=(const MigrationEngine&) = delete;

  void start() override;
  // Every sealed cell that enters a BBuff, on either side.
  void set_bbuff_observer(std::function<void(Side, std::span<const std::byte>)> fn) {
    bbuff_observer_ = std::move(fn);
  }

  bool started() const noexcept { return started_; }
  bool resumed() const noexcept override { return resumed_; }
  bool finished() const noexcept override { return finished_; }
  bool failed() const noexcept override { return failed_; }
  bool key_delivered() const noexcept { return channel_ && channel_->delivered(); }

  Host* destination() noexcept override { return dst_.host.get(); }
  std::unique_ptr<Host> release_destination() override { return std::move(dst_.host); }
  const MigrationReport& report() const noexcept override { return report_; }
  const MigrationOptions& options() const noexcept { return options_; }

  const BitVector& save_vec() const noexcept { return src_.save_vec; }
  const BitVector& restore_vec() const noexcept { return dst_.restore_vec; }
  const BBuffLayout& source_layout() const noexcept { return src_.layout; }
  std::span<const RegionId> region_order() const noexcept { return src_.region_order; }

 private:
  struct SourceSide {
    std::vector<RegionId> region_order;
    BBuffLayout layout;
    KeyArr keys;
    std::vector<std::byte> mbuff;
    std::vector<std::byte> key_bundle;
    BitVector save_vec;
    BitVector sent;
    BitVector acked;
    std::vector<std::vector<std::byte>> cells;
    std::size_t save_cursor = 0;
    std::deque<std::uint32_t> save_requests;
    bool save_busy = false;
    std::vector<std::uint8_t> response_pending;
    std::size_t transfer_cursor = 0;
    std::size_t in_flight = 0;
    bool transfer_enabled = false;
    bool done_sent = false;
    std::size_t acked_count = 0;
    bool torn_down = false;
    Nanos metadata_ready{0};
    Nanos save_complete{0};
    Nanos last_ack{0};
  };

  struct DestSide {
    std::unique_ptr<Host> host;
    bool hello = false;
    std::vector<std::byte> key_bundle;
    std::vector<std::byte> mbuff;
    bool have_key_bundle = false;
    bool have_mbuff = false;
    bool done_received = false;
    bool init_started = false;
    bool layout_ready = false;
    std::vector<std::vector<std::byte>> arrived;  // by heap page
    std::vector<std::uint8_t> local;              // by heap page
    std::vector<Key> page_keys;
    BBuffLayout layout;
    BitVector restore_vec;
    BitVector claimed;
    std::vector<std::uint8_t> dropped;
    std::size_t finished_slots = 0;
    std::size_t restore_cursor = 0;
    bool restore_busy = false;
    bool restore_started = false;
    bool restore_done = false;
    std::optional<PageIndex> restore_waiting;
    std::unordered_map<PageIndex, Nanos> fault_started;
    Nanos mbuff_received{0};
    Nanos transfer_done{0};
    Nanos init_done{0};
    Nanos restore_complete{0};
  };

  template <class F>
  void defer(Nanos delay, F&& fn);
  Nanos step_cost(Nanos base);
  void log(Side side, EventKind kind, std::uint32_t slot = kNoEventSlot, PageIndex page = 0);
  bool sequential() const noexcept { return options_.protocol == Protocol::StopAndCopy; }
  void guarded(const std::function<void()>& fn);

  // Source manager.
  void source_paused();
  void prepare_metadata();
  void metadata_ready();
  void ship_metadata();
  void save_next();
  void finish_save(std::uint32_t slot);
  void pump_transfer();
  void send_page(std::uint32_t slot, FrameType type, Priority priority);
  void serve_fault(std::uint32_t slot);
  void source_receive(Frame&& frame);
  void maybe_teardown_source();
  void teardown_source();

  // Destination manager.
  void dest_receive(Frame&& frame);
  void dest_store_page(const Frame& frame);
  void begin_dest_init();
  void dest_after_init();
  void dest_after_metadata();
  void dest_resume();
  void restore_next();
  void finish_restore(std::uint32_t slot);
  void install_slot(std::uint32_t slot);
  void drop_region(const MemRegion& region);
  void slot_finished();
  void complete_restore();
  bool restore_slot(std::size_t slot) override;

  void fail(const Error& error);
  void maybe_finish();
  void fill_report();

  sim::EventLoop& loop_;
  SimLink& link_;
  Host& src_host_;
  MigrationOptions options_;
  EnclaveConfig dst_config_;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
  std::unique_ptr<KeyDeliveryChannel> channel_;
  SourceSide src_;
  DestSide dst_;
  MigrationReport report_;
  std::vector<Nanos> fault_latencies_;

  bool started_ = false;
  bool resumed_ = false;
  bool finished_ = false;
  bool failed_ = false;

  std::function<void(Side, std::span<const std::byte>)> bbuff_observer_;
};

struct MigrationOutcome {
  MigrationReport report;
  std::unique_ptr<Host> destination;
};

// Migrates an idle source host to completion (no concurrent workload).
MigrationOutcome run_migration(sim::EventLoop& loop, SimLink& link, Host& source,
                               const MigrationOptions& options);

MigrationOutcome migrate_stop_and_copy(sim::EventLoop& loop, SimLink& link, Host& source,
                                       MigrationOptions options = {});
MigrationOutcome migrate_optmig(sim::EventLoop& loop, SimLink& link, Host& source,
                                Placement placement, MigrationOptions options = {});
MigrationOutcome migrate_pre_copy(sim::EventLoop& loop, SimLink& link, Host& source,
                                  MigrationOptions options = {});

// Builds the engine for options.protocol.
std::unique_ptr<Migration> make_migration(sim::EventLoop& loop, SimLink& link, Host& source,
                                          const MigrationOptions& options);

}  // namespace optmig
