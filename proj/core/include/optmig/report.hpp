#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "optmig/enclave.hpp"
#include "optmig/layout.hpp"
#include "optmig/types.hpp"

namespace optmig {

enum class Protocol : std::uint8_t {
  StopAndCopy,
  PreCopy,
  PostCopyOptMigV1,
  PostCopyOptMigV2,
  // Classic post-copy over ordinary memory; needs fault tracking.
  PostCopyPlain,
};

std::string_view to_string(Protocol p) noexcept;
Protocol protocol_from_string(std::string_view s);
Placement placement_from_string(std::string_view s);

// Synchronous (downtime-critical) time only.
struct PhaseBreakdown {
  Nanos save{0};
  Nanos transfer{0};
  Nanos init{0};
  Nanos restore{0};

  Nanos sum() const noexcept { return save + transfer + init + restore; }
};

struct ThroughputSample {
  Nanos time{0};
  double ops_per_sec = 0;
};

struct MigrationReport {
  Protocol protocol = Protocol::PostCopyOptMigV2;
  Placement placement = Placement::Smart;
  bool completed = false;
  bool aborted = false;
  bool source_resumed = false;
  std::string error;

  Nanos start_time{0};
  Nanos pause_time{0};
  Nanos resume_time{0};
  Nanos end_time{0};
  Nanos downtime{0};
  Nanos migration_time{0};
  PhaseBreakdown phases;
  // Work that overlapped with the resumed application.
  Nanos background_save{0};
  Nanos background_transfer{0};
  Nanos background_restore{0};

  std::uint64_t bytes_transferred = 0;
  std::uint64_t bytes_to_destination = 0;
  std::uint64_t bytes_to_source = 0;
  std::uint64_t heap_pages = 0;
  std::uint64_t bbuff_pages = 0;
  std::uint64_t pages_sent = 0;
  std::uint64_t duplicate_pages = 0;
  std::uint64_t mbuff_bytes = 0;
  std::uint64_t key_bundle_bytes = 0;

  std::uint64_t network_fault_count = 0;
  Nanos fault_latency_mean{0};
  Nanos fault_latency_max{0};
  std::uint64_t pages_restored_on_demand = 0;

  // Pre-copy only.
  std::uint64_t precopy_rounds = 0;
  std::vector<std::uint64_t> round_pages;
  std::uint64_t final_round_pages = 0;
  bool non_converged = false;

  EdmmCounters destination_edmm;
  Nanos destination_init_time{0};
  Bytes destination_committed_bytes = 0;

  // Filled by the experiment driver.
  std::vector<ThroughputSample> throughput_timeline;
  Nanos zero_throughput_window{0};
  double pre_migration_throughput = 0;
  double post_migration_throughput = 0;
  std::string event_log_path;
};

enum class ReportFormat : std::uint8_t { Json, Csv };

std::string report_to_json(const MigrationReport& report, int indent = 2);
std::string report_to_csv(const MigrationReport& report);
void emit_report(const MigrationReport& report, ReportFormat format,
                 const std::filesystem::path& path);

}  // namespace optmig
