#pragma once

#include <cstring>
#include <memory>
#include <random>
#include <vector>

#include "optmig/host.hpp"
#include "optmig/sim/event_loop.hpp"
#include "optmig/sim_link.hpp"

namespace optmig::test {

inline EnclaveConfig enclave_config(Bytes max_heap, Bytes committed = 0,
                                    MemoryKind kind = MemoryKind::EnclaveBacked) {
  EnclaveConfig c;
  c.max_heap_bytes = max_heap;
  c.committed_bytes = committed == 0 ? max_heap : committed;
  c.kind = kind;
  return c;
}

inline std::unique_ptr<Host> running_host(const EnclaveConfig& config, HostOptions options = {}) {
  auto h = std::make_unique<Host>(config, options);
  h->enclave().transition(Phase::Running);
  return h;
}

inline void fill(Host& host, const Allocation& a, Bytes size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::byte> buf(size);
  for (auto& b : buf) b = static_cast<std::byte>(rng());
  host.enclave().write(a.offset, buf);
}

inline std::vector<std::byte> read_bytes(const Host& host, Bytes offset, Bytes size) {
  std::vector<std::byte> out(size);
  host.enclave().read(offset, out);
  return out;
}

// Regions, segments and every live byte match.
inline bool same_heap(const Host& a, const Host& b) {
  const auto ra = a.heap().regions().regions();
  const auto rb = b.heap().regions().regions();
  if (ra.size() != rb.size()) return false;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    if (ra[i].id != rb[i].id || ra[i].offset != rb[i].offset || ra[i].size != rb[i].size) {
      return false;
    }
    if (read_bytes(a, ra[i].offset, ra[i].size) != read_bytes(b, rb[i].offset, rb[i].size)) {
      return false;
    }
  }
  const auto da = a.heap().data_segment();
  const auto db = b.heap().data_segment();
  return da.size() == db.size() && std::memcmp(da.data(), db.data(), da.size()) == 0;
}

// A link where every frame is effectively free, for protocol-only tests.
inline LinkModel fast_link() {
  LinkModel m;
  m.bandwidth = 1e12;
  m.one_way_latency = Nanos{1000};
  return m;
}

}  // namespace optmig::test
