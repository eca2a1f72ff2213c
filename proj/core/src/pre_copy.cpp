#include "optmig/pre_copy.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

namespace optmig {

PreCopyEngine::PreCopyEngine(sim::EventLoop& loop, SimLink& link, Host& source,
                             MigrationOptions options)
    : loop_(loop), link_(link), src_host_(source), options_(std::move(options)) {
  if (options_.window == 0) throw Error(ErrorCode::ConfigInvalid, "transfer window must be > 0");
  if (options_.max_rounds == 0) throw Error(ErrorCode::ConfigInvalid, "max_rounds must be > 0");
  options_.protocol = Protocol::PreCopy;
  report_.protocol = Protocol::PreCopy;
  report_.placement = Placement::Naive;

  link_.set_receiver(Side::Source, [this, a = alive_](Frame&& f) {
    if (*a && !failed_) guarded([&] { source_receive(std::move(f)); });
  });
  link_.set_receiver(Side::Destination, [this, a = alive_](Frame&& f) {
    if (*a && !failed_) guarded([&] { dest_receive(std::move(f)); });
  });
  auto on_fail = [this, a = alive_](const Error& e) {
    if (*a) fail(e);
  };
  link_.set_failure_handler(Side::Source, on_fail);
  link_.set_failure_handler(Side::Destination, on_fail);
}

PreCopyEngine::~PreCopyEngine() {
  *alive_ = false;
  secure_wipe(std::as_writable_bytes(std::span(keys_.page_keys)));
  secure_wipe(std::as_writable_bytes(std::span(dst_keys_)));
  secure_wipe(keys_.master_key);
  secure_wipe(dst_master_);
}

template <class F>
void PreCopyEngine::defer(Nanos delay, F&& fn) {
  loop_.after(delay, [this, a = alive_, f = std::forward<F>(fn)]() mutable {
    if (!*a || failed_) return;
    guarded(f);
  });
}

void PreCopyEngine::guarded(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    fail(e);
  }
}

void PreCopyEngine::log(Side side, EventKind kind, PageIndex page) {
  if (options_.log) options_.log->append(loop_.now(), side, kind, kNoEventSlot, page);
}

std::vector<PageIndex> PreCopyEngine::live_pages() const {
  std::vector<PageIndex> out;
  for (const auto& r : src_host_.heap().regions().regions()) {
    for (PageIndex p = r.first_page(); p < r.first_page() + r.page_count(); ++p) out.push_back(p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<PageIndex> PreCopyEngine::live_only(std::vector<PageIndex> pages) const {
  const Enclave& e = src_host_.enclave();
  std::erase_if(pages, [&](PageIndex p) { return !e.in_use(p); });
  return pages;
}

void PreCopyEngine::start() {
  if (started_) throw Error(ErrorCode::ConfigInvalid, "migration already started");
  Enclave& src = src_host_.enclave();
  if (!src.supports_dirty_tracking()) {
    throw Error(ErrorCode::CapabilityUnsupported,
                "pre-copy needs dirty-page tracking, which enclave memory does not offer");
  }
  started_ = true;
  report_.start_time = loop_.now();

  EnclaveConfig cfg = src.config();
  report_.destination_committed_bytes = cfg.committed_bytes;
  dst_ = std::make_unique<Host>(cfg, options_.destination_host);
  dst_->enclave().transition(Phase::Restoring);
  report_.destination_init_time = dst_->enclave().init_time();

  keys_ = generate_keys(cfg.heap_pages());
  channel_ = std::make_unique<KeyDeliveryChannel>(keys_.master_key);
  std::vector<std::byte> bundle = wrap_key_bundle(keys_);
  report_.key_bundle_bytes = bundle.size();
  report_.heap_pages = cfg.heap_pages();

  src.start_dirty_tracking();
  (void)src.collect_dirty();
  link_.send(Side::Source, make_hello());
  link_.send(Side::Source, make_blob_frame(FrameType::KeyBundle, bundle));
  begin_round(live_pages());
}

// ---------------------------------------------------------------------------
// Source
// ---------------------------------------------------------------------------

void PreCopyEngine::begin_round(std::vector<PageIndex> pages) {
  report_.round_pages.push_back(pages.size());
  ++report_.precopy_rounds;
  round_outstanding_ = pages.size();
  for (PageIndex p : pages) seal_queue_.emplace_back(p);
  if (pages.empty()) {
    defer(Nanos{0}, [this] { round_complete(); });
    return;
  }
  seal_next();
}

void PreCopyEngine::round_complete() {
  std::vector<PageIndex> dirty = live_only(src_host_.enclave().collect_dirty());
  const bool converged = dirty.size() <= options_.dirty_threshold;
  if (converged || report_.precopy_rounds >= options_.max_rounds) {
    report_.non_converged = !converged;
    if (!converged) {
      spdlog::warn("pre-copy did not converge after {} rounds; {} pages left for the final round",
                   report_.precopy_rounds, dirty.size());
    }
    carry_over_ = std::move(dirty);
    src_host_.enclave().request_pause([this, a = alive_] {
      if (*a && !failed_) guarded([this] { source_paused(); });
    });
    return;
  }
  begin_round(std::move(dirty));
}

void PreCopyEngine::source_paused() {
  report_.pause_time = loop_.now();
  log(Side::Source, EventKind::Pause);
  defer(options_.costs.pause, [this] { begin_final_round(); });
}

void PreCopyEngine::begin_final_round() {
  Enclave& src = src_host_.enclave();
  src.transition(Phase::Saving);
  std::vector<PageIndex> final_set = carry_over_;
  std::vector<PageIndex> late = src.collect_dirty();
  src.stop_dirty_tracking();
  final_set.insert(final_set.end(), late.begin(), late.end());
  std::sort(final_set.begin(), final_set.end());
  final_set.erase(std::unique(final_set.begin(), final_set.end()), final_set.end());
  final_set = live_only(std::move(final_set));

  final_round_ = true;
  report_.final_round_pages = final_set.size();
  round_outstanding_ = final_set.size();
  for (PageIndex p : final_set) seal_queue_.emplace_back(p);
  seal_queue_.emplace_back(std::nullopt);
  seal_next();
}

void PreCopyEngine::seal_next() {
  if (seal_busy_ || seal_queue_.empty()) return;
  const std::optional<PageIndex> item = seal_queue_.front();
  seal_queue_.pop_front();
  seal_busy_ = true;

  if (!item) {
    const OptMgr& heap = src_host_.heap();
    const std::vector<RegionId> order = order_layout(heap.regions(), Placement::Naive);
    std::vector<std::byte> meta = heap.serialize_metadata(order);
    const Nanos cost = options_.costs.blob_cost(meta.size()) +
                       options_.costs.metadata_per_region * static_cast<std::int64_t>(order.size());
    defer(cost, [this, meta = std::move(meta)]() mutable {
      seal_busy_ = false;
      std::vector<std::byte> mbuff = seal_blob(meta, keys_.master_key);
      secure_wipe(meta);
      report_.mbuff_bytes = mbuff.size();
      final_sealed_ = loop_.now();
      report_.phases.save = loop_.now() - report_.pause_time;
      send_queue_.push_back({make_blob_frame(FrameType::MBuff, mbuff), false});
      send_queue_.push_back({make_done(), false});
      pump();
    });
    return;
  }

  const PageIndex page = *item;
  defer(options_.costs.seal_per_page, [this, page] {
    seal_busy_ = false;
    Page plain{};
    src_host_.enclave().copy_page(page, plain);
    const SealedPage sealed = seal_page(page, plain, keys_.page_keys[page]);
    secure_wipe(plain);
    log(Side::Source, EventKind::Save, page);
    send_queue_.push_back({make_page_frame(FrameType::Page, page, encode_sealed_page(sealed)), true});
    pump();
    seal_next();
  });
}

void PreCopyEngine::pump() {
  while (!send_queue_.empty()) {
    Outgoing& next = send_queue_.front();
    if (next.page && in_flight_ >= options_.window) return;
    if (next.page) {
      ++in_flight_;
      ++report_.pages_sent;
      log(Side::Source, EventKind::Send, parse_page_body(next.frame).index);
    } else if (next.frame.type == FrameType::Done) {
      log(Side::Source, EventKind::Done);
    }
    link_.send(Side::Source, std::move(next.frame));
    send_queue_.pop_front();
  }
}

void PreCopyEngine::source_receive(Frame&& frame) {
  switch (frame.type) {
    case FrameType::Ack: {
      (void)parse_ack(frame);
      if (in_flight_ > 0) --in_flight_;
      if (round_outstanding_ > 0 && --round_outstanding_ == 0 && !final_round_) {
        round_complete();
      }
      pump();
      break;
    }
    case FrameType::Abort:
      throw Error(ErrorCode::TransportFailure, "destination aborted the migration");
    default:
      throw Error(ErrorCode::ProtocolError,
                  "unexpected " + std::string(to_string(frame.type)) + " at the source");
  }
}

void PreCopyEngine::teardown_source() {
  if (source_torn_down_) return;
  source_torn_down_ = true;
  src_host_.heap().release_all();
  src_host_.enclave().zeroize();
  secure_wipe(std::as_writable_bytes(std::span(keys_.page_keys)));
  secure_wipe(keys_.master_key);
  if (src_host_.enclave().phase() == Phase::Saving) src_host_.enclave().transition(Phase::Drained);
  log(Side::Source, EventKind::Teardown);
}

// ---------------------------------------------------------------------------
// Destination
// ---------------------------------------------------------------------------

void PreCopyEngine::dest_enqueue(Nanos cost, std::function<void()> fn) {
  dst_queue_.emplace_back(cost, std::move(fn));
  dest_next();
}

void PreCopyEngine::dest_next() {
  if (dst_busy_ || dst_queue_.empty()) return;
  auto [cost, fn] = std::move(dst_queue_.front());
  dst_queue_.pop_front();
  dst_busy_ = true;
  defer(cost, [this, fn = std::move(fn)] {
    dst_busy_ = false;
    fn();
    dest_next();
  });
}

void PreCopyEngine::dest_receive(Frame&& frame) {
  switch (frame.type) {
    case FrameType::Hello:
      if (parse_hello(frame) != kProtocolVersion) {
        throw Error(ErrorCode::ProtocolError, "unsupported protocol version");
      }
      break;
    case FrameType::KeyBundle: {
      auto body = std::make_shared<std::vector<std::byte>>(std::move(frame.body));
      dest_enqueue(options_.costs.blob_cost(body->size()), [this, body] {
        if (!channel_) throw Error(ErrorCode::TransportFailure, "key channel revoked");
        Key master = channel_->deliver();
        log(Side::Destination, EventKind::KeyDelivered);
        dst_keys_ = unwrap_key_bundle(*body, master);
        dst_master_ = master;
        secure_wipe(master);
      });
      break;
    }
    case FrameType::Page: {
      auto f = std::make_shared<Frame>(std::move(frame));
      dest_enqueue(options_.costs.unseal_per_page, [this, f] { dest_install(*f); });
      break;
    }
    case FrameType::MBuff: {
      auto body = std::make_shared<std::vector<std::byte>>(std::move(frame.body));
      dest_enqueue(options_.costs.blob_cost(body->size()), [this, body] { dest_metadata(*body); });
      break;
    }
    case FrameType::Done:
      done_received_ = loop_.now();
      log(Side::Destination, EventKind::Done);
      dest_enqueue(options_.costs.resume, [this] { dest_resume(); });
      break;
    case FrameType::Abort:
      throw Error(ErrorCode::TransportFailure, "source aborted the migration");
    default:
      throw Error(ErrorCode::ProtocolError,
                  "unexpected " + std::string(to_string(frame.type)) + " at the destination");
  }
}

void PreCopyEngine::dest_install(const Frame& frame) {
  const PageBody body = parse_page_body(frame);
  const PageIndex page = body.index;
  if (page >= dst_keys_.size()) throw Error(ErrorCode::ProtocolError, "page index out of range");
  log(Side::Destination, EventKind::Receive, page);
  Page plain{};
  unseal_page_into(decode_sealed_page(page, body.bundle), dst_keys_[page], plain);
  dst_->enclave().install_page(page, plain);
  secure_wipe(plain);
  log(Side::Destination, EventKind::Restore, page);
  link_.send(Side::Destination, make_ack(page, FrameType::Page));
}

void PreCopyEngine::dest_metadata(const std::vector<std::byte>& mbuff) {
  std::vector<std::byte> meta = unseal_blob(mbuff, dst_master_);
  OptMgr& heap = dst_->heap();
  heap.restore_metadata(meta);
  secure_wipe(meta);
  Enclave& e = dst_->enclave();
  std::vector<std::uint8_t> live(e.page_count(), 0);
  for (const auto& r : heap.regions().regions()) {
    for (PageIndex p = r.first_page(); p < r.first_page() + r.page_count(); ++p) live[p] = 1;
  }
  for (PageIndex p = 0; p < e.page_count(); ++p) {
    if (live[p]) {
      e.ensure_backed(p);
    } else if (e.page_materialized(p)) {
      // Shipped in an early round, freed before the pause.
      e.discard_page(p);
    }
  }
}

void PreCopyEngine::dest_resume() {
  dst_->enclave().transition(Phase::Running);
  resumed_ = true;
  report_.resume_time = loop_.now();
  report_.downtime = loop_.now() - report_.pause_time;
  report_.phases.transfer = done_received_ - final_sealed_;
  report_.phases.restore = loop_.now() - done_received_;
  log(Side::Destination, EventKind::Resume);
  secure_wipe(std::as_writable_bytes(std::span(dst_keys_)));
  secure_wipe(dst_master_);
  teardown_source();
  if (on_resumed_) on_resumed_(*dst_);
  maybe_finish();
}

// ---------------------------------------------------------------------------
// Completion and failure
// ---------------------------------------------------------------------------

void PreCopyEngine::fail(const Error& error) {
  if (failed_ || finished_) return;
  failed_ = true;
  report_.aborted = true;
  report_.error = error.what();
  spdlog::error("pre-copy aborted ({}): {}", resumed_ ? "after resume" : "source authoritative",
                error.what());
  log(resumed_ ? Side::Destination : Side::Source, EventKind::Abort);
  if (!resumed_) {
    channel_.reset();
    if (!link_.down()) {
      try {
        link_.send(Side::Source, make_abort(error.what()), Priority::Urgent);
      } catch (const Error&) {
      }
    }
    Enclave& src = src_host_.enclave();
    src.stop_dirty_tracking();
    if (src.phase() == Phase::Paused || src.phase() == Phase::Saving) {
      src.resume_after_abort();
      report_.source_resumed = true;
    } else if (src.phase() == Phase::Running) {
      report_.source_resumed = true;
    }
    dst_.reset();
  }
  fill_report();
  if (on_aborted_) on_aborted_(error, report_.source_resumed);
}

void PreCopyEngine::maybe_finish() {
  if (finished_ || failed_ || !resumed_ || !source_torn_down_) return;
  finished_ = true;
  report_.completed = true;
  fill_report();
  if (on_finished_) on_finished_();
}

void PreCopyEngine::fill_report() {
  report_.end_time = loop_.now();
  report_.migration_time = report_.end_time - report_.start_time;
  report_.bytes_to_destination = link_.stats(Side::Source).wire_bytes;
  report_.bytes_to_source = link_.stats(Side::Destination).wire_bytes;
  report_.bytes_transferred = report_.bytes_to_destination + report_.bytes_to_source;
  report_.bbuff_pages = report_.round_pages.empty() ? 0 : report_.round_pages.front();
  if (dst_) report_.destination_edmm = dst_->enclave().counters();
}

// ---------------------------------------------------------------------------

std::unique_ptr<Migration> make_migration(sim::EventLoop& loop, SimLink& link, Host& source,
                                          const MigrationOptions& options) {
  if (options.protocol == Protocol::PreCopy) {
    return std::make_unique<PreCopyEngine>(loop, link, source, options);
  }
  return std::make_unique<MigrationEngine>(loop, link, source, options);
}

MigrationOutcome migrate_pre_copy(sim::EventLoop& loop, SimLink& link, Host& source,
                                  MigrationOptions options) {
  options.protocol = Protocol::PreCopy;
  return run_migration(loop, link, source, options);
}

}  // namespace optmig
