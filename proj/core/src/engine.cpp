#include "optmig/engine.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

namespace optmig {

Bytes destination_committed_bytes(const EnclaveConfig& source, const MigrationOptions& options) {
  if (options.protocol == Protocol::PostCopyOptMigV2) {
    const Bytes want = options.v2_committed_bytes / kPageSize * kPageSize;
    return std::min(want, source.max_heap_bytes);
  }
  return source.max_heap_bytes;
}

MigrationEngine::MigrationEngine(sim::EventLoop& loop, SimLink& link, Host& source,
                                 MigrationOptions options)
    : loop_(loop), link_(link), src_host_(source), options_(std::move(options)) {
  if (options_.window == 0) throw Error(ErrorCode::ConfigInvalid, "transfer window must be > 0");
  dst_config_ = source.enclave().config();
  dst_config_.committed_bytes = destination_committed_bytes(dst_config_, options_);
  report_.protocol = options_.protocol;
  report_.placement = options_.placement;
  report_.destination_committed_bytes = dst_config_.committed_bytes;

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

MigrationEngine::~MigrationEngine() {
  *alive_ = false;
  secure_wipe(std::as_writable_bytes(std::span(src_.keys.page_keys)));
  secure_wipe(std::as_writable_bytes(std::span(dst_.page_keys)));
  secure_wipe(src_.keys.master_key);
}

template <class F>
void MigrationEngine::defer(Nanos delay, F&& fn) {
  loop_.after(delay, [this, a = alive_, f = std::forward<F>(fn)]() mutable {
    if (!*a || failed_) return;
    guarded(f);
  });
}

void MigrationEngine::guarded(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    fail(e);
  }
}

Nanos MigrationEngine::step_cost(Nanos base) {
  return options_.jitter_steps ? base + loop_.jitter() : base;
}

void MigrationEngine::log(Side side, EventKind kind, std::uint32_t slot, PageIndex page) {
  if (options_.log) options_.log->append(loop_.now(), side, kind, slot, page);
}

void MigrationEngine::start() {
  if (started_) throw Error(ErrorCode::ConfigInvalid, "migration already started");
  if (options_.protocol == Protocol::PreCopy) {
    throw Error(ErrorCode::ConfigInvalid, "pre-copy runs on PreCopyEngine");
  }
  if (options_.protocol == Protocol::PostCopyPlain &&
      !src_host_.enclave().supports_fault_tracking()) {
    throw Error(ErrorCode::CapabilityUnsupported,
                "post-copy needs page-fault tracking, which enclave memory does not offer");
  }
  started_ = true;
  report_.start_time = loop_.now();
  src_host_.enclave().request_pause([this, a = alive_] {
    if (*a) guarded([this] { source_paused(); });
  });
}

// ---------------------------------------------------------------------------
// Source migration manager
// ---------------------------------------------------------------------------

void MigrationEngine::source_paused() {
  report_.pause_time = loop_.now();
  log(Side::Source, EventKind::Pause);
  defer(options_.costs.pause, [this] { prepare_metadata(); });
}

void MigrationEngine::prepare_metadata() {
  Enclave& enclave = src_host_.enclave();
  OptMgr& heap = src_host_.heap();
  enclave.transition(Phase::Saving);

  const std::size_t heap_pages = enclave.config().heap_pages();
  src_.keys = generate_keys(heap_pages);
  const Placement placement = sequential() ? Placement::Naive : options_.placement;
  src_.region_order = order_layout(heap.regions(), placement);
  src_.layout = BBuffLayout::build(heap.regions().regions(), src_.region_order, heap_pages);

  std::vector<std::byte> meta = heap.serialize_metadata(src_.region_order);
  channel_ = std::make_unique<KeyDeliveryChannel>(src_.keys.master_key);
  src_.mbuff = seal_blob(meta, src_.keys.master_key);
  src_.key_bundle = wrap_key_bundle(src_.keys);
  const std::size_t meta_bytes = meta.size();
  secure_wipe(meta);

  const std::size_t n = src_.layout.slots();
  src_.save_vec = BitVector(n, BitRole::SaveVec);
  src_.sent = BitVector(n, BitRole::SaveVec);
  src_.acked = BitVector(n, BitRole::SaveVec);
  src_.cells.assign(n, {});
  src_.response_pending.assign(n, 0);

  report_.heap_pages = heap_pages;
  report_.bbuff_pages = n;
  report_.mbuff_bytes = src_.mbuff.size();
  report_.key_bundle_bytes = src_.key_bundle.size();

  const Nanos cost = options_.costs.keygen_per_key * static_cast<std::int64_t>(heap_pages) +
                     options_.costs.blob_cost(meta_bytes + heap_pages * kKeySize);
  defer(cost, [this] { metadata_ready(); });
}

void MigrationEngine::metadata_ready() {
  src_.metadata_ready = loop_.now();
  if (!sequential()) {
    report_.phases.save = loop_.now() - report_.pause_time;
    ship_metadata();
    src_.transfer_enabled = true;
  }
  save_next();
  pump_transfer();
}

void MigrationEngine::ship_metadata() {
  link_.send(Side::Source, make_hello());
  link_.send(Side::Source, make_blob_frame(FrameType::KeyBundle, src_.key_bundle));
  link_.send(Side::Source, make_blob_frame(FrameType::MBuff, src_.mbuff));
}

void MigrationEngine::save_next() {
  if (src_.save_busy || src_.torn_down) return;
  const std::size_t n = src_.layout.slots();
  std::optional<std::uint32_t> chosen;
  // Out-of-order requests from network faults go first.
  while (!src_.save_requests.empty() && !chosen) {
    const std::uint32_t s = src_.save_requests.front();
    src_.save_requests.pop_front();
    if (!src_.save_vec.test(s)) chosen = s;
  }
  if (!chosen) {
    while (src_.save_cursor < n && src_.save_vec.test(src_.save_cursor)) ++src_.save_cursor;
    if (src_.save_cursor < n) chosen = static_cast<std::uint32_t>(src_.save_cursor);
  }
  if (!chosen) {
    if (src_.save_complete == Nanos{0} && src_.save_vec.all()) {
      src_.save_complete = loop_.now();
      if (sequential()) {
        report_.phases.save = loop_.now() - report_.pause_time;
        ship_metadata();
        src_.transfer_enabled = true;
        pump_transfer();
      }
    }
    return;
  }
  src_.save_busy = true;
  const std::uint32_t slot = *chosen;
  defer(step_cost(options_.costs.seal_per_page), [this, slot] { finish_save(slot); });
}

void MigrationEngine::finish_save(std::uint32_t slot) {
  src_.save_busy = false;
  const PageIndex page = src_.layout.slot_page[slot];
  Page plain{};
  src_host_.enclave().copy_page(page, plain);
  const SealedPage sealed = seal_page(page, plain, src_.keys.page_keys[page]);
  secure_wipe(plain);
  src_.cells[slot] = encode_sealed_page(sealed);
  if (bbuff_observer_) bbuff_observer_(Side::Source, src_.cells[slot]);
  src_.save_vec.set(slot);
  log(Side::Source, EventKind::Save, slot, page);
  if (src_.response_pending[slot]) {
    src_.response_pending[slot] = 0;
    defer(step_cost(options_.costs.fault_service), [this, slot] { serve_fault(slot); });
  }
  pump_transfer();
  save_next();
}

void MigrationEngine::send_page(std::uint32_t slot, FrameType type, Priority priority) {
  const PageIndex page = src_.layout.slot_page[slot];
  link_.send(Side::Source, make_page_frame(type, page, src_.cells[slot]), priority);
  if (type == FrameType::Page) ++src_.in_flight;
  if (src_.sent.test_and_set(slot)) ++report_.duplicate_pages;
  ++report_.pages_sent;
  log(Side::Source, EventKind::Send, slot, page);
}

void MigrationEngine::pump_transfer() {
  if (!src_.transfer_enabled || src_.torn_down) return;
  const std::size_t n = src_.layout.slots();
  while (src_.transfer_cursor < n && src_.in_flight < options_.window) {
    const auto s = static_cast<std::uint32_t>(src_.transfer_cursor);
    if (src_.sent.test(s)) {
      ++src_.transfer_cursor;
      continue;
    }
    if (!src_.save_vec.test(s)) break;  // gated on save_vec
    send_page(s, FrameType::Page, Priority::Normal);
    ++src_.transfer_cursor;
  }
  if (src_.transfer_cursor == n && !src_.done_sent) {
    src_.done_sent = true;
    link_.send(Side::Source, make_done());
    maybe_teardown_source();
  }
}

void MigrationEngine::serve_fault(std::uint32_t slot) {
  // Already acknowledged: the destination holds the page.
  if (src_.cells[slot].empty()) return;
  send_page(slot, FrameType::PageResponse, Priority::Urgent);
}

void MigrationEngine::source_receive(Frame&& frame) {
  switch (frame.type) {
    case FrameType::Ack: {
      const AckBody ack = parse_ack(frame);
      const std::uint32_t s = src_.layout.slot_of(ack.index);
      if (s == kNoSlot) throw Error(ErrorCode::ProtocolError, "ACK for a page outside BBuff");
      if (ack.acked == FrameType::Page && src_.in_flight > 0) --src_.in_flight;
      if (!src_.acked.test_and_set(s)) {
        ++src_.acked_count;
        std::vector<std::byte>().swap(src_.cells[s]);
      }
      src_.last_ack = loop_.now();
      pump_transfer();
      maybe_teardown_source();
      break;
    }
    case FrameType::PageRequest: {
      const PageIndex page = parse_page_request(frame);
      const std::uint32_t s = src_.layout.slot_of(page);
      if (s == kNoSlot) throw Error(ErrorCode::ProtocolError, "PAGE_REQUEST outside BBuff");
      if (src_.save_vec.test(s)) {
        defer(step_cost(options_.costs.fault_service), [this, s] { serve_fault(s); });
      } else {
        // Not sealed yet: the save task takes this page next.
        src_.response_pending[s] = 1;
        src_.save_requests.push_back(s);
        save_next();
      }
      break;
    }
    case FrameType::Abort:
      throw Error(ErrorCode::TransportFailure, "destination aborted the migration");
    default:
      throw Error(ErrorCode::ProtocolError,
                  "unexpected " + std::string(to_string(frame.type)) + " at the source");
  }
}

void MigrationEngine::maybe_teardown_source() {
  if (src_.torn_down || !src_.done_sent) return;
  if (src_.acked_count != src_.layout.slots()) return;
  // The source stays authoritative until the destination holds the key.
  if (!key_delivered()) return;
  teardown_source();
}

void MigrationEngine::teardown_source() {
  src_.torn_down = true;
  src_host_.heap().release_all();
  src_host_.enclave().zeroize();
  secure_wipe(std::as_writable_bytes(std::span(src_.keys.page_keys)));
  secure_wipe(src_.keys.master_key);
  src_.cells.clear();
  if (src_host_.enclave().phase() == Phase::Saving) src_host_.enclave().transition(Phase::Drained);
  log(Side::Source, EventKind::Teardown);
  maybe_finish();
}

// ---------------------------------------------------------------------------
// Destination migration manager
// ---------------------------------------------------------------------------

void MigrationEngine::dest_receive(Frame&& frame) {
  if (!dst_.hello && frame.type != FrameType::Hello) {
    throw Error(ErrorCode::ProtocolError, "frame before HELLO");
  }
  switch (frame.type) {
    case FrameType::Hello:
      if (parse_hello(frame) != kProtocolVersion) {
        throw Error(ErrorCode::ProtocolError, "unsupported protocol version");
      }
      dst_.hello = true;
      dst_.arrived.assign(dst_config_.heap_pages(), {});
      dst_.local.assign(dst_config_.heap_pages(), 0);
      break;
    case FrameType::KeyBundle:
      dst_.key_bundle = std::move(frame.body);
      dst_.have_key_bundle = true;
      break;
    case FrameType::MBuff:
      dst_.mbuff = std::move(frame.body);
      dst_.have_mbuff = true;
      dst_.mbuff_received = loop_.now();
      if (!sequential()) {
        report_.phases.transfer = loop_.now() - src_.metadata_ready;
        begin_dest_init();
      }
      break;
    case FrameType::Page:
    case FrameType::PageResponse:
      dest_store_page(frame);
      break;
    case FrameType::Done:
      dst_.done_received = true;
      dst_.transfer_done = loop_.now();
      if (sequential()) {
        report_.phases.transfer = loop_.now() - src_.save_complete;
        begin_dest_init();
      }
      break;
    case FrameType::Abort:
      throw Error(ErrorCode::TransportFailure, "source aborted the migration");
    default:
      throw Error(ErrorCode::ProtocolError,
                  "unexpected " + std::string(to_string(frame.type)) + " at the destination");
  }
}

void MigrationEngine::dest_store_page(const Frame& frame) {
  const PageBody body = parse_page_body(frame);
  const PageIndex page = body.index;
  if (page >= dst_.local.size()) throw Error(ErrorCode::ProtocolError, "page index out of range");

  const bool layout_known = dst_.layout_ready;
  const std::uint32_t slot = layout_known ? dst_.layout.slot_of(page) : kNoEventSlot;
  if (dst_.local[page] || (layout_known && slot == kNoSlot)) {
    ++report_.duplicate_pages;
  } else {
    dst_.arrived[page].assign(body.bundle.begin(), body.bundle.end());
    dst_.local[page] = 1;
    if (bbuff_observer_) bbuff_observer_(Side::Destination, dst_.arrived[page]);
    log(Side::Destination, EventKind::Receive, slot, page);
  }
  link_.send(Side::Destination, make_ack(page, frame.type));

  if (auto it = dst_.fault_started.find(page); it != dst_.fault_started.end()) {
    fault_latencies_.push_back(loop_.now() - it->second);
    dst_.fault_started.erase(it);
  }
  if (dst_.restore_waiting && *dst_.restore_waiting == page) {
    dst_.restore_waiting.reset();
    defer(Nanos{0}, [this] { restore_next(); });
  }
}

void MigrationEngine::begin_dest_init() {
  if (dst_.init_started) return;
  if (!dst_.have_key_bundle || !dst_.have_mbuff) {
    throw Error(ErrorCode::ProtocolError, "metadata incomplete at destination init");
  }
  dst_.init_started = true;
  dst_.host = std::make_unique<Host>(dst_config_, options_.destination_host);
  const Nanos init = dst_.host->enclave().init_time();
  report_.destination_init_time = init;
  report_.phases.init = init;
  defer(init, [this] { dest_after_init(); });
}

void MigrationEngine::dest_after_init() {
  dst_.init_done = loop_.now();
  Host& host = *dst_.host;
  host.enclave().transition(Phase::Restoring);
  if (!channel_) throw Error(ErrorCode::TransportFailure, "key channel revoked");
  Key master = channel_->deliver();
  log(Side::Destination, EventKind::KeyDelivered);

  dst_.page_keys = unwrap_key_bundle(dst_.key_bundle, master);
  std::vector<std::byte> meta = unseal_blob(dst_.mbuff, master);
  secure_wipe(master);
  if (dst_.page_keys.size() != dst_config_.heap_pages()) {
    throw Error(ErrorCode::ProtocolError, "key bundle does not match the heap size");
  }
  host.heap().restore_metadata(meta);
  const std::size_t meta_bytes = meta.size();
  secure_wipe(meta);

  const std::size_t heap_pages = dst_config_.heap_pages();
  dst_.layout = BBuffLayout::build(host.heap().regions().regions(), host.heap().previous_layout(),
                                   heap_pages);
  const std::size_t n = dst_.layout.slots();
  dst_.restore_vec = BitVector(n, BitRole::RestoreVec);
  dst_.claimed = BitVector(n, BitRole::Claim);
  dst_.dropped.assign(n, 0);
  dst_.layout_ready = true;
  for (PageIndex p = 0; p < heap_pages; ++p) {
    if (!dst_.arrived[p].empty() && dst_.layout.slot_of(p) == kNoSlot) {
      std::vector<std::byte>().swap(dst_.arrived[p]);
    }
  }

  const Nanos cost = options_.costs.blob_cost(dst_.key_bundle.size() + meta_bytes) +
                     options_.costs.metadata_per_region *
                         static_cast<std::int64_t>(host.heap().regions().size());
  std::vector<std::byte>().swap(dst_.key_bundle);
  std::vector<std::byte>().swap(dst_.mbuff);
  maybe_teardown_source();
  defer(cost, [this] { dest_after_metadata(); });
}

void MigrationEngine::dest_after_metadata() {
  Host& host = *dst_.host;
  host.heap().set_free_observer([this, a = alive_](const MemRegion& r) {
    if (*a) drop_region(r);
  });
  dst_.restore_started = true;
  if (!sequential()) {
    host.guard().begin_restore(dst_.restore_vec, dst_.layout.page_to_slot, *this);
    defer(options_.costs.resume, [this] { dest_resume(); });
  }
  if (dst_.layout.slots() == 0) {
    defer(Nanos{0}, [this] { complete_restore(); });
  } else {
    restore_next();
  }
}

void MigrationEngine::dest_resume() {
  Host& host = *dst_.host;
  host.enclave().transition(Phase::Running);
  resumed_ = true;
  report_.resume_time = loop_.now();
  report_.downtime = loop_.now() - report_.pause_time;
  report_.phases.restore = loop_.now() - dst_.init_done;
  log(Side::Destination, EventKind::Resume);
  if (on_resumed_) on_resumed_(host);
  maybe_finish();
}

void MigrationEngine::restore_next() {
  if (dst_.restore_busy || dst_.restore_done || !dst_.restore_started) return;
  const std::size_t n = dst_.layout.slots();
  while (dst_.restore_cursor < n && (dst_.restore_vec.test(dst_.restore_cursor) ||
                                     dst_.claimed.test(dst_.restore_cursor))) {
    ++dst_.restore_cursor;
  }
  if (dst_.restore_cursor == n) return;
  const auto slot = static_cast<std::uint32_t>(dst_.restore_cursor);
  const PageIndex page = dst_.layout.slot_page[slot];
  if (!dst_.local[page]) {
    dst_.restore_waiting = page;
    return;
  }
  dst_.claimed.set(slot);
  dst_.restore_busy = true;
  defer(step_cost(options_.costs.unseal_per_page), [this, slot] { finish_restore(slot); });
}

void MigrationEngine::finish_restore(std::uint32_t slot) {
  dst_.restore_busy = false;
  if (dst_.dropped[slot]) {
    dst_.restore_vec.set(slot);
    log(Side::Destination, EventKind::Drop, slot, dst_.layout.slot_page[slot]);
    slot_finished();
  } else {
    install_slot(slot);
  }
  restore_next();
}

void MigrationEngine::install_slot(std::uint32_t slot) {
  const PageIndex page = dst_.layout.slot_page[slot];
  auto& cell = dst_.arrived[page];
  Page plain{};
  try {
    const SealedPage sealed = decode_sealed_page(page, cell);
    unseal_page_into(sealed, dst_.page_keys[page], plain);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IntegrityFailure) throw;
    throw Error(ErrorCode::IntegrityFailure, "page " + std::to_string(page) + ": " + e.what());
  }
  Enclave& enclave = dst_.host->enclave();
  enclave.ensure_backed(page);
  enclave.install_page(page, plain);
  secure_wipe(plain);
  std::vector<std::byte>().swap(cell);
  dst_.restore_vec.set(slot);
  log(Side::Destination, EventKind::Restore, slot, page);
  slot_finished();
}

void MigrationEngine::drop_region(const MemRegion& region) {
  if (!dst_.restore_started || dst_.restore_done) return;
  for (PageIndex p = region.first_page(); p < region.first_page() + region.page_count(); ++p) {
    const std::uint32_t s = dst_.layout.slot_of(p);
    if (s == kNoSlot) continue;
    dst_.layout.page_to_slot[p] = kNoSlot;
    if (dst_.restore_vec.test(s)) continue;
    dst_.dropped[s] = 1;
    std::vector<std::byte>().swap(dst_.arrived[p]);
    if (dst_.restore_waiting && *dst_.restore_waiting == p) {
      dst_.restore_waiting.reset();
      defer(Nanos{0}, [this] { restore_next(); });
    }
    // A slot claimed by the restore task is retired when its unseal completes.
    if (!dst_.claimed.test_and_set(s)) {
      dst_.restore_vec.set(s);
      log(Side::Destination, EventKind::Drop, s, p);
      slot_finished();
    }
  }
}

void MigrationEngine::slot_finished() {
  ++dst_.finished_slots;
  if (dst_.finished_slots == dst_.layout.slots()) {
    // Deferred: the guard may still be iterating over this access.
    defer(Nanos{0}, [this] { complete_restore(); });
  }
}

void MigrationEngine::complete_restore() {
  if (dst_.restore_done) return;
  dst_.restore_done = true;
  dst_.restore_complete = loop_.now();
  dst_.host->guard().set_all_restored();
  std::vector<std::vector<std::byte>>().swap(dst_.arrived);
  if (sequential()) {
    defer(options_.costs.resume, [this] { dest_resume(); });
    return;
  }
  maybe_finish();
}

bool MigrationEngine::restore_slot(std::size_t slot_index) {
  const auto slot = static_cast<std::uint32_t>(slot_index);
  if (dst_.restore_vec.test(slot)) return false;
  auto stalled = [this] {
    return Error(ErrorCode::TransportFailure,
                 failed_ ? "migration failed: " + report_.error : "restore stalled");
  };
  if (dst_.claimed.test_and_set(slot)) {
    // The restore task is unsealing this page right now.
    if (!loop_.run_until([&] { return dst_.restore_vec.test(slot) || failed_; }) || failed_) {
      throw stalled();
    }
    return false;
  }
  const PageIndex page = dst_.layout.slot_page[slot];
  bool fault = false;
  try {
    if (!dst_.local[page]) {
      fault = true;
      ++report_.network_fault_count;
      dst_.fault_started.emplace(page, loop_.now());
      log(Side::Destination, EventKind::FaultRequest, slot, page);
      link_.send(Side::Destination, make_page_request(page), Priority::Urgent);
      if (!loop_.run_until([&] { return dst_.local[page] || failed_; }) || failed_) {
        throw stalled();
      }
    }
    loop_.advance(step_cost(options_.costs.unseal_per_page));
    if (failed_) throw stalled();
    install_slot(slot);
  } catch (const Error& e) {
    fail(e);
    throw;
  }
  ++report_.pages_restored_on_demand;
  return fault;
}

// ---------------------------------------------------------------------------
// Completion and failure
// ---------------------------------------------------------------------------

void MigrationEngine::fail(const Error& error) {
  if (failed_ || finished_) return;
  failed_ = true;
  report_.aborted = true;
  report_.error = error.what();
  const bool delivered = key_delivered();
  spdlog::error("migration aborted ({} key delivery): {}", delivered ? "after" : "before",
                error.what());
  log(delivered ? Side::Destination : Side::Source, EventKind::Abort);

  if (!delivered) {
    // The source is still authoritative: revoke the key and take back control.
    channel_.reset();
    if (!link_.down()) {
      try {
        link_.send(Side::Source, make_abort(error.what()), Priority::Urgent);
      } catch (const Error&) {
      }
    }
    Enclave& enclave = src_host_.enclave();
    if (enclave.phase() == Phase::Paused || enclave.phase() == Phase::Saving) {
      enclave.resume_after_abort();
      report_.source_resumed = true;
    }
    secure_wipe(std::as_writable_bytes(std::span(src_.keys.page_keys)));
    secure_wipe(src_.keys.master_key);
    src_.cells.clear();
    dst_.host.reset();
  } else if (!src_.torn_down) {
    // The destination holds the key; the source must never run again.
    try {
      teardown_source();
    } catch (const Error& e) {
      spdlog::error("source teardown failed: {}", e.what());
    }
  }
  fill_report();
  if (on_aborted_) on_aborted_(error, report_.source_resumed);
}

void MigrationEngine::maybe_finish() {
  if (finished_ || failed_) return;
  if (!resumed_ || !dst_.restore_done || !src_.torn_down) return;
  finished_ = true;
  report_.completed = true;
  fill_report();
  if (on_finished_) on_finished_();
}

void MigrationEngine::fill_report() {
  report_.end_time = loop_.now();
  report_.migration_time = report_.end_time - report_.start_time;
  report_.bytes_to_destination = link_.stats(Side::Source).wire_bytes;
  report_.bytes_to_source = link_.stats(Side::Destination).wire_bytes;
  report_.bytes_transferred = report_.bytes_to_destination + report_.bytes_to_source;
  if (!sequential() && src_.save_complete > src_.metadata_ready) {
    report_.background_save = src_.save_complete - src_.metadata_ready;
  }
  if (!sequential() && src_.last_ack > src_.metadata_ready) {
    report_.background_transfer = src_.last_ack - src_.metadata_ready;
  }
  if (resumed_ && dst_.restore_complete > report_.resume_time) {
    report_.background_restore = dst_.restore_complete - report_.resume_time;
  }
  if (!fault_latencies_.empty()) {
    Nanos total{0};
    Nanos worst{0};
    for (Nanos l : fault_latencies_) {
      total += l;
      worst = std::max(worst, l);
    }
    report_.fault_latency_mean = total / static_cast<std::int64_t>(fault_latencies_.size());
    report_.fault_latency_max = worst;
  }
  if (dst_.host) report_.destination_edmm = dst_.host->enclave().counters();
}

MigrationOutcome run_migration(sim::EventLoop& loop, SimLink& link, Host& source,
                               const MigrationOptions& options) {
  std::unique_ptr<Migration> engine = make_migration(loop, link, source, options);
  engine->start();
  loop.run();
  MigrationOutcome out;
  out.report = engine->report();
  if (!engine->finished() && !engine->failed()) {
    out.report.aborted = true;
    out.report.error = "migration stalled";
  }
  out.destination = engine->release_destination();
  return out;
}

MigrationOutcome migrate_stop_and_copy(sim::EventLoop& loop, SimLink& link, Host& source,
                                       MigrationOptions options) {
  options.protocol = Protocol::StopAndCopy;
  return run_migration(loop, link, source, options);
}

MigrationOutcome migrate_optmig(sim::EventLoop& loop, SimLink& link, Host& source,
                                Placement placement, MigrationOptions options) {
  if (options.protocol != Protocol::PostCopyOptMigV1) options.protocol = Protocol::PostCopyOptMigV2;
  options.placement = placement;
  return run_migration(loop, link, source, options);
}

}  // namespace optmig
