#include "optmig/host.hpp"

namespace optmig {

Host::Host(const EnclaveConfig& config, const HostOptions& options)
    : options_(options),
      enclave_(config),
      heap_(enclave_, options.segments, options.lookup),
      guard_(heap_, options.guard),
      access_(enclave_, heap_, guard_) {}

}  // namespace optmig
