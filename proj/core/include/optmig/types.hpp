#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>

namespace optmig {

// Every enclave-facing structure works on 4 KiB pages; the size is not configurable.
inline constexpr std::size_t kPageSize = 4096;

using Bytes = std::uint64_t;
using PageIndex = std::uint64_t;
using Nanos = std::chrono::nanoseconds;
using Page = std::array<std::byte, kPageSize>;

// Region ids are opaque; arithmetic on them is meaningless.
enum class RegionId : std::uint64_t {};

constexpr std::uint64_t to_underlying(RegionId id) noexcept {
  return static_cast<std::uint64_t>(id);
}

constexpr std::uint64_t pages_for(Bytes bytes) noexcept {
  return (bytes + kPageSize - 1) / kPageSize;
}

constexpr PageIndex page_of(Bytes offset) noexcept { return offset / kPageSize; }

constexpr bool is_page_multiple(Bytes bytes) noexcept { return bytes % kPageSize == 0; }

inline constexpr Bytes KiB = 1024;
inline constexpr Bytes MiB = 1024 * KiB;
inline constexpr Bytes GiB = 1024 * MiB;

}  // namespace optmig
