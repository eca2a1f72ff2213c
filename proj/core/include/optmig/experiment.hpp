#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "optmig/engine.hpp"
#include "optmig/event_log.hpp"
#include "optmig/workload.hpp"

namespace optmig {

struct ExperimentConfig {
  WorkloadSpec workload;
  Protocol protocol = Protocol::PostCopyOptMigV2;
  Placement placement = Placement::Smart;
  // max_heap_bytes == 0 takes the workload's heap size; committed_bytes == 0
  // means fully committed.
  EnclaveConfig enclave;
  HostOptions host;
  LinkModel link;
  MigrationOptions migration;

  // The migration request lands mid-ECALL inside this op.
  std::optional<std::uint64_t> trigger_op;
  double trigger_fraction = 0.5;
  bool migrate = true;

  std::uint64_t seed = 1;
  bool shuffle_ties = false;
  Nanos jitter{0};
  // Real sleeps proportional to virtual time; 0 keeps the clock purely virtual.
  double real_time_scale = 0;

  Nanos timeline_bucket{10'000'000};
  bool verify_oracle = true;
  // Compare every live heap byte and the MemArr against the oracle host.
  bool compare_heap = true;
  bool record_events = false;

  std::filesystem::path output;  // report; empty for none
  ReportFormat format = ReportFormat::Json;
  std::filesystem::path event_log;  // JSON lines; empty for none

  EnclaveConfig resolved_enclave() const;
  std::uint64_t resolved_trigger() const;
};

struct ExperimentResult {
  MigrationReport report;
  bool verdict_ok = false;
  std::string verdict;
  std::uint64_t ops_completed = 0;
  std::uint64_t ops_on_destination = 0;
  std::uint64_t mismatched_ops = 0;
  std::uint64_t digest = 0;
  std::uint64_t oracle_digest = 0;
  std::optional<AuditVerdict> audit;
  // Virtual completion time of every op, in op order.
  std::vector<Nanos> completions;
  EventLog events;
};

// Runs the workload on a source host, migrates it at the trigger op, lets it
// finish wherever it ended up, and checks it against an un-migrated run with
// the same seed.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Per-op result hashes and final digest of an un-migrated run.
struct OracleRun {
  std::vector<std::uint64_t> results;
  std::uint64_t digest = 0;
  std::unique_ptr<Host> host;
};
OracleRun run_oracle(const ExperimentConfig& config);

// Completions per bucket, as ops/s.
std::vector<ThroughputSample> throughput_timeline(std::span<const Nanos> completions,
                                                  Nanos bucket);
// Longest gap between consecutive completions.
Nanos zero_throughput_window(std::span<const Nanos> completions);

}  // namespace optmig
