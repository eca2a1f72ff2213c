#include "optmig/experiment.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace optmig {

EnclaveConfig ExperimentConfig::resolved_enclave() const {
  EnclaveConfig e = enclave;
  if (e.max_heap_bytes == 0) e.max_heap_bytes = workload.heap_bytes;
  if (e.committed_bytes == 0) e.committed_bytes = e.max_heap_bytes;
  e.validate();
  return e;
}

std::uint64_t ExperimentConfig::resolved_trigger() const {
  const std::uint64_t ops = workload.ops;
  std::uint64_t t = trigger_op.value_or(
      static_cast<std::uint64_t>(std::floor(double(ops) * std::clamp(trigger_fraction, 0.0, 1.0))));
  return std::min(t, ops - 1);
}

OracleRun run_oracle(const ExperimentConfig& config) {
  OracleRun out;
  out.host = std::make_unique<Host>(config.resolved_enclave(), config.host);
  Host& h = *out.host;
  h.enclave().transition(Phase::Running);
  auto wl = make_workload(config.workload);
  h.enclave().ecall([&] { wl->setup(h.access()); });
  out.results.reserve(config.workload.ops);
  for (std::uint64_t op = 0; op < config.workload.ops; ++op) {
    out.results.push_back(h.enclave().ecall([&] { return wl->step(h.access(), op); }));
  }
  out.digest = h.enclave().ecall([&] { return wl->digest(h.access()); });
  return out;
}

std::vector<ThroughputSample> throughput_timeline(std::span<const Nanos> completions,
                                                  Nanos bucket) {
  std::vector<ThroughputSample> out;
  if (completions.empty() || bucket.count() <= 0) return out;
  const Nanos last = *std::max_element(completions.begin(), completions.end());
  const auto n = static_cast<std::size_t>(last / bucket) + 1;
  std::vector<std::uint64_t> counts(n, 0);
  for (Nanos t : completions) ++counts[static_cast<std::size_t>(t / bucket)];
  const double secs = std::chrono::duration<double>(bucket).count();
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({bucket * static_cast<std::int64_t>(i), double(counts[i]) / secs});
  }
  return out;
}

Nanos zero_throughput_window(std::span<const Nanos> completions) {
  Nanos worst{0};
  for (std::size_t i = 1; i < completions.size(); ++i) {
    worst = std::max(worst, completions[i] - completions[i - 1]);
  }
  return worst;
}

namespace {

double rate(std::span<const Nanos> completions, Nanos from, Nanos to) {
  std::uint64_t n = 0;
  Nanos first{0};
  Nanos last{0};
  for (Nanos t : completions) {
    if (t < from || t > to) continue;
    if (n == 0) first = t;
    last = t;
    ++n;
  }
  if (n < 2 || last == first) return 0;
  return double(n - 1) / std::chrono::duration<double>(last - first).count();
}

// Drives one workload through one migration on the shared virtual clock.
class Driver {
 public:
  Driver(const ExperimentConfig& cfg, ExperimentResult& result)
      : cfg_(cfg),
        result_(result),
        loop_(sim::EventLoop::Options{cfg.seed, cfg.shuffle_ties, cfg.jitter, cfg.real_time_scale}),
        link_(loop_, cfg.link),
        trigger_(cfg.resolved_trigger()) {}

  void run() {
    source_ = std::make_unique<Host>(cfg_.resolved_enclave(), cfg_.host);
    current_ = source_.get();
    source_->enclave().transition(Phase::Running);
    workload_ = make_workload(cfg_.workload);
    source_->enclave().ecall([&] { workload_->setup(source_->access()); });

    const std::uint64_t ops = cfg_.workload.ops;
    results_.assign(ops, 0);
    result_.completions.assign(ops, Nanos{-1});

    loop_.after(Nanos{0}, [this] { issue(); });
    loop_.run();

    result_.ops_completed = completed_;
    if (migration_) {
      result_.report = migration_->report();
      if (!migration_->finished() && !migration_->failed()) {
        problems_.push_back("migration did not finish");
      }
    }
    if (completed_ != ops) {
      problems_.push_back("only " + std::to_string(completed_) + " of " + std::to_string(ops) +
                          " ops completed");
    }
  }

  std::vector<std::uint64_t>& results() noexcept { return results_; }
  std::vector<std::string>& problems() noexcept { return problems_; }
  Host* current() noexcept { return stopped_ ? nullptr : current_; }
  Host* source() noexcept { return source_.get(); }
  Workload& workload() noexcept { return *workload_; }
  Migration* migration() noexcept { return migration_.get(); }
  Nanos first_destination_completion() const noexcept { return first_dest_; }
  sim::EventLoop& loop() noexcept { return loop_; }

 private:
  void issue() {
    if (stopped_ || next_op_ == cfg_.workload.ops) return;
    Host& h = *current_;
    Enclave& e = h.enclave();
    if (e.phase() != Phase::Running || e.pause_pending()) {
      waiting_ = true;
      return;
    }
    const std::uint64_t op = next_op_++;
    const Nanos start = loop_.now();
    const Nanos cost = workload_->op_cost(op);
    std::uint64_t r = 0;
    e.begin_ecall();
    try {
      r = workload_->step(h.access(), op);
    } catch (const Error& err) {
      e.end_ecall();
      stop("op " + std::to_string(op) + " failed: " + err.what());
      return;
    }
    if (op == trigger_ && cfg_.migrate && !migration_) {
      loop_.at(std::max(loop_.now(), start + cost / 2), [this] { start_migration(); });
    }
    loop_.after(cost, [this, op, r, hp = &h] {
      hp->enclave().end_ecall();
      complete(op, r, hp);
      issue();
    });
  }

  void complete(std::uint64_t op, std::uint64_t r, Host* h) {
    results_[op] = r;
    result_.completions[op] = loop_.now();
    ++completed_;
    if (h != source_.get()) {
      if (result_.ops_on_destination++ == 0) first_dest_ = loop_.now();
    }
  }

  void start_migration() {
    MigrationOptions mo = cfg_.migration;
    mo.protocol = cfg_.protocol;
    mo.placement = cfg_.placement;
    if (cfg_.record_events || !cfg_.event_log.empty()) mo.log = &result_.events;
    try {
      migration_ = make_migration(loop_, link_, *source_, mo);
      migration_->on_resumed([this](Host& dst) {
        current_ = &dst;
        resume_issuing();
      });
      migration_->on_aborted([this](const Error& err, bool source_resumed) {
        problems_.push_back(std::string("migration aborted: ") + err.what());
        if (source_resumed) {
          current_ = source_.get();
          resume_issuing();
        } else if (current_ == source_.get()) {
          stop("source torn down after an abort");
        }
      });
      migration_->start();
    } catch (const Error& err) {
      stop(std::string("migration could not start: ") + err.what());
      throw;
    }
  }

  void resume_issuing() {
    if (!waiting_) return;
    waiting_ = false;
    loop_.after(Nanos{0}, [this] { issue(); });
  }

  void stop(const std::string& why) {
    if (stopped_) return;
    stopped_ = true;
    problems_.push_back(why);
  }

  const ExperimentConfig& cfg_;
  ExperimentResult& result_;
  sim::EventLoop loop_;
  SimLink link_;
  std::uint64_t trigger_;

  std::unique_ptr<Host> source_;
  Host* current_ = nullptr;
  std::unique_ptr<Workload> workload_;
  std::unique_ptr<Migration> migration_;

  std::vector<std::uint64_t> results_;
  std::vector<std::string> problems_;
  std::uint64_t next_op_ = 0;
  std::uint64_t completed_ = 0;
  bool waiting_ = false;
  bool stopped_ = false;
  Nanos first_dest_{-1};
};

// Byte and MemArr equality of two hosts' heaps and data segments.
std::optional<std::string> compare_heaps(Host& a, Host& b) {
  auto ra = a.heap().regions().regions();
  auto rb = b.heap().regions().regions();
  if (ra.size() != rb.size()) return "region count differs";
  for (std::size_t i = 0; i < ra.size(); ++i) {
    if (ra[i].id != rb[i].id || ra[i].offset != rb[i].offset || ra[i].size != rb[i].size) {
      return "region table differs at entry " + std::to_string(i);
    }
  }
  auto da = a.heap().data_segment();
  auto db = b.heap().data_segment();
  if (da.size() != db.size() || !std::equal(da.begin(), da.end(), db.begin())) {
    return "data segment differs";
  }
  Page pa{};
  Page pb{};
  for (const auto& r : ra) {
    for (PageIndex p = r.first_page(); p < r.first_page() + r.page_count(); ++p) {
      if (!a.enclave().page_materialized(p) && !b.enclave().page_materialized(p)) continue;
      a.enclave().copy_page(p, pa);
      b.enclave().copy_page(p, pb);
      if (pa != pb) return "heap page " + std::to_string(p) + " differs";
    }
  }
  return std::nullopt;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.workload.ops == 0) throw Error(ErrorCode::ConfigInvalid, "workload.ops must be > 0");
  ExperimentResult result;

  OracleRun oracle;
  if (config.verify_oracle) oracle = run_oracle(config);
  if (!config.compare_heap) oracle.host.reset();

  Driver driver(config, result);
  driver.run();
  std::vector<std::string>& problems = driver.problems();
  MigrationReport& report = result.report;
  report.protocol = config.protocol;
  report.placement = config.placement;

  if (Host* h = driver.current()) {
    if (h->enclave().phase() == Phase::Running) {
      result.digest = h->enclave().ecall([&] { return driver.workload().digest(h->access()); });
    }
  }

  if (config.verify_oracle) {
    result.oracle_digest = oracle.digest;
    const auto& got = driver.results();
    for (std::uint64_t op = 0; op < config.workload.ops; ++op) {
      if (result.completions[op].count() >= 0 && got[op] != oracle.results[op]) {
        ++result.mismatched_ops;
      }
    }
    if (result.mismatched_ops > 0) {
      problems.push_back(std::to_string(result.mismatched_ops) + " ops observed different state");
    }
    if (result.digest != oracle.digest) problems.push_back("final digest differs from the oracle");
    if (oracle.host && driver.current()) {
      if (auto diff = compare_heaps(*driver.current(), *oracle.host)) problems.push_back(*diff);
    }
  }

  // Timeline over completed ops only.
  std::vector<Nanos> done;
  done.reserve(result.completions.size());
  for (Nanos t : result.completions) {
    if (t.count() >= 0) done.push_back(t);
  }
  report.throughput_timeline = throughput_timeline(done, config.timeline_bucket);
  report.zero_throughput_window = zero_throughput_window(done);

  if (Migration* m = driver.migration()) {
    if (m->resumed() && driver.first_destination_completion().count() >= 0) {
      // Downtime ends with the first operation the destination completes.
      report.downtime = driver.first_destination_completion() - report.pause_time;
      // The migration is not over before the application has run again.
      if (driver.first_destination_completion() > report.end_time) {
        report.migration_time = driver.first_destination_completion() - report.start_time;
      }
    }
    if (report.pause_time.count() > 0) {
      report.pre_migration_throughput = rate(done, Nanos{0}, report.pause_time);
    }
    if (m->finished()) {
      report.post_migration_throughput =
          rate(done, report.end_time, Nanos{std::numeric_limits<std::int64_t>::max()});
    }
    if (auto* engine = dynamic_cast<MigrationEngine*>(m); engine && result.events.size() > 0) {
      result.audit = consistency_audit(result.events.events(), &engine->save_vec(),
                                       engine->finished() ? &engine->restore_vec() : nullptr);
      if (!result.audit->ok()) {
        problems.push_back(std::to_string(result.audit->violations.size()) +
                           " consistency violations");
      }
    }
  } else {
    report.pre_migration_throughput = rate(done, Nanos{0}, Nanos{std::numeric_limits<std::int64_t>::max()});
  }

  if (!config.event_log.empty()) {
    result.events.write_jsonl(config.event_log);
    report.event_log_path = config.event_log.string();
  }
  if (!config.output.empty()) emit_report(report, config.format, config.output);

  result.verdict_ok = problems.empty();
  if (result.verdict_ok) {
    result.verdict = "ok";
  } else {
    for (const auto& p : problems) {
      if (!result.verdict.empty()) result.verdict += "; ";
      result.verdict += p;
    }
    spdlog::warn("experiment verdict: {}", result.verdict);
  }
  return result;
}

}  // namespace optmig
