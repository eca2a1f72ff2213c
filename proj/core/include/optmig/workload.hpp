#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>

#include "optmig/guard.hpp"
#include "optmig/types.hpp"

namespace optmig {

enum class WorkloadKind : std::uint8_t {
  EcallLoop,
  KeyValue,
  SequentialScan,
  RandomProbe,
  GraphTraversal,
  TwoRegionAB,
};

std::string_view to_string(WorkloadKind kind) noexcept;
WorkloadKind workload_from_string(std::string_view s);

struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::EcallLoop;
  Bytes heap_bytes = 64 * MiB;
  // Bytes the workload allocates; 0 picks a per-kind default.
  Bytes working_set_bytes = 0;
  std::uint64_t ops = 10'000;
  std::uint64_t seed = 1;
  // Virtual time one operation (one ECALL) takes; 0 picks a per-kind default.
  Nanos op_cost{0};

  // KeyValue
  std::uint64_t keys = 4096;
  Bytes value_size = 10 * KiB;
  unsigned set_percent = 50;

  // TwoRegionAB
  Bytes region_a_bytes = 16 * MiB;
  Bytes region_b_bytes = 16 * MiB;
  char hot_region = 'B';

  Bytes resolved_working_set() const noexcept;
  Nanos resolved_op_cost() const noexcept;
};

// A deterministic application driven one ECALL at a time. All mutable state
// lives in enclave memory (heap regions, with roots in the data segment), so
// an instance can continue on whichever host currently holds that memory.
class Workload {
 public:
  explicit Workload(WorkloadSpec spec) : spec_(spec) {}
  virtual ~Workload() = default;

  const WorkloadSpec& spec() const noexcept { return spec_; }

  virtual void setup(HeapAccess& heap) = 0;
  // Returns a hash of what the operation observed.
  virtual std::uint64_t step(HeapAccess& heap, std::uint64_t op) = 0;
  // Hash of the complete observable state.
  virtual std::uint64_t digest(HeapAccess& heap) = 0;

  Nanos op_cost(std::uint64_t /*op*/) const noexcept { return spec_.resolved_op_cost(); }

 protected:
  std::uint64_t rand(std::uint64_t op, std::uint64_t salt = 0) const noexcept;

  WorkloadSpec spec_;
};

std::unique_ptr<Workload> make_workload(const WorkloadSpec& spec);

// Word-at-a-time 64-bit hash used for op results and digests.
std::uint64_t hash_bytes(std::span<const std::byte> bytes, std::uint64_t seed = 0) noexcept;
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace optmig
