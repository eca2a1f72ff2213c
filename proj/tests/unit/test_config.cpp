#include <gtest/gtest.h>

#include <cstdlib>
#include <optional>

#include "optmig/config.hpp"

using namespace optmig;

TEST(Config, Sizes) {
  EXPECT_EQ(parse_size("4096"), 4096u);
  EXPECT_EQ(parse_size("128K"), 128 * KiB);
  EXPECT_EQ(parse_size("128M"), 128 * MiB);
  EXPECT_EQ(parse_size("1G"), GiB);
  EXPECT_EQ(parse_size("1GiB"), GiB);
  EXPECT_EQ(parse_size("105MB"), 105 * MiB);
  EXPECT_THROW(parse_size("M"), Error);
  EXPECT_THROW(parse_size("12Q"), Error);
}

TEST(Config, Bandwidths) {
  EXPECT_DOUBLE_EQ(parse_bandwidth("1Gbps"), 125e6);
  EXPECT_DOUBLE_EQ(parse_bandwidth("100Mbps"), 12.5e6);
  EXPECT_DOUBLE_EQ(parse_bandwidth("5000"), 5000);
  EXPECT_THROW(parse_bandwidth("0"), Error);
  EXPECT_THROW(parse_bandwidth("fast"), Error);
}

TEST(Config, KeyValueText) {
  const ExperimentConfig c = parse_config(R"(
# a comment
workload = kvs
workload.ops = 123   # trailing
protocol = stop-and-copy
link.bandwidth = 1Gbps
enclave.memory = plain
seed = 5
)");
  EXPECT_EQ(c.workload.kind, WorkloadKind::KeyValue);
  EXPECT_EQ(c.workload.ops, 123u);
  EXPECT_EQ(c.protocol, Protocol::StopAndCopy);
  EXPECT_DOUBLE_EQ(c.link.bandwidth, 125e6);
  EXPECT_EQ(c.enclave.kind, MemoryKind::Plain);
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.workload.seed, 5u);
}

TEST(Config, JsonFlattensNestedKeys) {
  const ExperimentConfig c = parse_config(R"({
    "workload": {"kind": "ab", "heap": "32M", "hot_region": "A"},
    "migration": {"window": 8},
    "workload.seed": 3,
    "seed": 9,
    "shuffle_ties": true
  })");
  EXPECT_EQ(c.workload.kind, WorkloadKind::TwoRegionAB);
  EXPECT_EQ(c.workload.heap_bytes, 32 * MiB);
  EXPECT_EQ(c.workload.hot_region, 'A');
  EXPECT_EQ(c.migration.window, 8u);
  EXPECT_EQ(c.seed, 9u);
  // The explicit workload seed wins over the global one.
  EXPECT_EQ(c.workload.seed, 3u);
  EXPECT_TRUE(c.shuffle_ties);
}

TEST(Config, ErrorsNameTheProblem) {
  auto code = [](std::string_view text) -> std::optional<ErrorCode> {
    try {
      parse_config(text);
    } catch (const Error& e) {
      return e.code();
    }
    return std::nullopt;
  };
  EXPECT_EQ(code("nosuch = 1"), ErrorCode::ConfigInvalid);
  EXPECT_EQ(code("just words"), ErrorCode::ConfigInvalid);
  EXPECT_EQ(code("workload.ops = -1"), ErrorCode::ConfigInvalid);
  EXPECT_EQ(code("{\"a\": [1]}"), ErrorCode::ConfigInvalid);
  EXPECT_EQ(code("{bad json"), ErrorCode::ConfigInvalid);
  EXPECT_EQ(code("format = xml"), ErrorCode::ConfigInvalid);
  EXPECT_THROW(load_config("/nonexistent/config"), Error);
}

TEST(Config, SeedFromEnvironment) {
  ExperimentConfig c;
  ::setenv("MIGBENCH_SEED", "77", 1);
  apply_env_overrides(c);
  ::unsetenv("MIGBENCH_SEED");
  EXPECT_EQ(c.seed, 77u);
  EXPECT_EQ(c.workload.seed, 77u);
  ExperimentConfig d;
  apply_env_overrides(d);
  EXPECT_EQ(d.seed, 1u);
}
