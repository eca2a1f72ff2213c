#include "optmig/report.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "optmig/error.hpp"

namespace optmig {

std::string_view to_string(Protocol p) noexcept {
  switch (p) {
    case Protocol::StopAndCopy: return "stop-and-copy";
    case Protocol::PreCopy: return "pre-copy";
    case Protocol::PostCopyOptMigV1: return "optmig-v1";
    case Protocol::PostCopyOptMigV2: return "optmig-v2";
    case Protocol::PostCopyPlain: return "post-copy";
  }
  return "?";
}

Protocol protocol_from_string(std::string_view s) {
  if (s == "stop-and-copy" || s == "stopandcopy" || s == "sc") return Protocol::StopAndCopy;
  if (s == "pre-copy" || s == "precopy") return Protocol::PreCopy;
  if (s == "optmig-v1" || s == "v1") return Protocol::PostCopyOptMigV1;
  if (s == "optmig-v2" || s == "optmig" || s == "v2") return Protocol::PostCopyOptMigV2;
  if (s == "post-copy" || s == "postcopy") return Protocol::PostCopyPlain;
  throw Error(ErrorCode::ConfigInvalid, "unknown protocol '" + std::string(s) + "'");
}

Placement placement_from_string(std::string_view s) {
  if (s == "naive") return Placement::Naive;
  if (s == "smart") return Placement::Smart;
  throw Error(ErrorCode::ConfigInvalid, "unknown placement '" + std::string(s) + "'");
}

std::string report_to_json(const MigrationReport& r, int indent) {
  using nlohmann::json;
  json timeline = json::array();
  for (const auto& s : r.throughput_timeline) {
    timeline.push_back({{"t_ns", s.time.count()}, {"ops_per_sec", s.ops_per_sec}});
  }
  json j = {
      {"protocol", std::string(to_string(r.protocol))},
      {"placement", std::string(to_string(r.placement))},
      {"completed", r.completed},
      {"aborted", r.aborted},
      {"source_resumed", r.source_resumed},
      {"error", r.error},
      {"downtime_ns", r.downtime.count()},
      {"migration_time_ns", r.migration_time.count()},
      {"start_ns", r.start_time.count()},
      {"pause_ns", r.pause_time.count()},
      {"resume_ns", r.resume_time.count()},
      {"end_ns", r.end_time.count()},
      {"phases_ns",
       {{"save", r.phases.save.count()},
        {"transfer", r.phases.transfer.count()},
        {"init", r.phases.init.count()},
        {"restore", r.phases.restore.count()}}},
      {"background_ns",
       {{"save", r.background_save.count()},
        {"transfer", r.background_transfer.count()},
        {"restore", r.background_restore.count()}}},
      {"bytes_transferred", r.bytes_transferred},
      {"bytes_to_destination", r.bytes_to_destination},
      {"bytes_to_source", r.bytes_to_source},
      {"heap_pages", r.heap_pages},
      {"bbuff_pages", r.bbuff_pages},
      {"pages_sent", r.pages_sent},
      {"duplicate_pages", r.duplicate_pages},
      {"mbuff_bytes", r.mbuff_bytes},
      {"key_bundle_bytes", r.key_bundle_bytes},
      {"network_fault_count", r.network_fault_count},
      {"fault_latency_mean_ns", r.fault_latency_mean.count()},
      {"fault_latency_max_ns", r.fault_latency_max.count()},
      {"pages_restored_on_demand", r.pages_restored_on_demand},
      {"precopy",
       {{"rounds", r.precopy_rounds},
        {"round_pages", r.round_pages},
        {"final_round_pages", r.final_round_pages},
        {"non_converged", r.non_converged}}},
      {"destination",
       {{"init_time_ns", r.destination_init_time.count()},
        {"committed_bytes", r.destination_committed_bytes},
        {"eadd", r.destination_edmm.eadd},
        {"eaug", r.destination_edmm.eaug},
        {"eremove", r.destination_edmm.eremove}}},
      {"throughput_timeline", timeline},
      {"zero_throughput_window_ns", r.zero_throughput_window.count()},
      {"pre_migration_ops_per_sec", r.pre_migration_throughput},
      {"post_migration_ops_per_sec", r.post_migration_throughput},
      {"event_log", r.event_log_path},
  };
  return j.dump(indent);
}

std::string report_to_csv(const MigrationReport& r) {
  std::ostringstream out;
  out << "row,name,duration_ns,bytes_transferred,network_faults\n";
  const std::pair<const char*, Nanos> phases[] = {
      {"save", r.phases.save},
      {"transfer", r.phases.transfer},
      {"init", r.phases.init},
      {"restore", r.phases.restore},
  };
  for (const auto& [name, d] : phases) out << "phase," << name << ',' << d.count() << ",,\n";
  out << "downtime," << to_string(r.protocol) << ',' << r.downtime.count() << ",,\n";
  out << "summary," << to_string(r.protocol) << ',' << r.migration_time.count() << ','
      << r.bytes_transferred << ',' << r.network_fault_count << '\n';
  return out.str();
}

void emit_report(const MigrationReport& report, ReportFormat format,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::ConfigInvalid, "cannot write report to " + path.string());
  out << (format == ReportFormat::Json ? report_to_json(report) + "\n" : report_to_csv(report));
}

}  // namespace optmig
