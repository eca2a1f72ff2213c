#pragma once

#include "optmig/enclave.hpp"
#include "optmig/guard.hpp"
#include "optmig/optmgr.hpp"

namespace optmig {

struct HostOptions {
  SegmentSizes segments;
  LookupStrategy lookup = kDefaultLookup;
  GuardOptions guard;
};

// One machine's enclave with its heap manager and guarded access path.
class Host {
 public:
  Host(const EnclaveConfig& config, const HostOptions& options = {});

  Host(const Host&) = delete;
  Host& operator=(const Host&) = delete;

  Enclave& enclave() noexcept { return enclave_; }
  const Enclave& enclave() const noexcept { return enclave_; }
  OptMgr& heap() noexcept { return heap_; }
  const OptMgr& heap() const noexcept { return heap_; }
  AccessGuard& guard() noexcept { return guard_; }
  GuardedHeap& access() noexcept { return access_; }
  const HostOptions& options() const noexcept { return options_; }

 private:
  HostOptions options_;
  Enclave enclave_;
  OptMgr heap_;
  AccessGuard guard_;
  GuardedHeap access_;
};

}  // namespace optmig
