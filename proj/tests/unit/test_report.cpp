#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "optmig/report.hpp"

using namespace optmig;

namespace {

MigrationReport sample() {
  MigrationReport r;
  r.protocol = Protocol::PostCopyOptMigV2;
  r.completed = true;
  r.downtime = Nanos{250'000'000};
  r.migration_time = Nanos{900'000'000};
  r.phases = {Nanos{1}, Nanos{2}, Nanos{3}, Nanos{4}};
  r.bytes_transferred = 1234;
  r.network_fault_count = 5;
  r.throughput_timeline = {{Nanos{0}, 10.0}, {Nanos{10}, 0.0}};
  r.event_log_path = "events.jsonl";
  return r;
}

}  // namespace

TEST(Report, JsonCarriesTheFullStructure) {
  const auto j = nlohmann::json::parse(report_to_json(sample()));
  EXPECT_EQ(j.at("protocol"), "optmig-v2");
  EXPECT_EQ(j.at("downtime_ns"), 250'000'000);
  EXPECT_EQ(j.at("migration_time_ns"), 900'000'000);
  EXPECT_EQ(j.at("phases_ns").at("init"), 3);
  EXPECT_EQ(j.at("network_fault_count"), 5);
  EXPECT_EQ(j.at("bytes_transferred"), 1234);
  EXPECT_EQ(j.at("throughput_timeline").size(), 2u);
  EXPECT_EQ(j.at("event_log"), "events.jsonl");
  EXPECT_EQ(j.at("destination").at("eadd"), 0);
}

TEST(Report, CsvHasOneRowPerPhasePlusSummary) {
  std::istringstream in(report_to_csv(sample()));
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], "row,name,duration_ns,bytes_transferred,network_faults");
  EXPECT_EQ(lines[1], "phase,save,1,,");
  EXPECT_EQ(lines[4], "phase,restore,4,,");
  EXPECT_EQ(lines[5], "downtime,optmig-v2,250000000,,");
  EXPECT_EQ(lines[6], "summary,optmig-v2,900000000,1234,5");
}

TEST(Report, EmitWritesTheFile) {
  const auto path = std::filesystem::temp_directory_path() / "optmig_report_test.json";
  emit_report(sample(), ReportFormat::Json, path);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  std::filesystem::remove(path);
  EXPECT_EQ(j.at("network_fault_count"), 5);
}

TEST(Report, ProtocolNamesRoundTrip) {
  for (Protocol p : {Protocol::StopAndCopy, Protocol::PreCopy, Protocol::PostCopyOptMigV1,
                     Protocol::PostCopyOptMigV2, Protocol::PostCopyPlain}) {
    EXPECT_EQ(protocol_from_string(to_string(p)), p);
  }
  EXPECT_EQ(placement_from_string("smart"), Placement::Smart);
  EXPECT_THROW(protocol_from_string("warp-drive"), Error);
}
