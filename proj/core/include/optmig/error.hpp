#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace optmig {

enum class ErrorCode {
  ConfigInvalid,
  OutOfEnclaveMemory,
  DoubleFree,
  EnclaveNotRunning,
  InvalidPhaseTransition,
  UnreadablePage,
  UnknownRegion,
  DecodeError,
  WildAccess,
  IntegrityFailure,
  PrematureFlag,
  AlreadyDelivered,
  CapabilityUnsupported,
  NonConvergence,
  TransportFailure,
  ProtocolError,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::OutOfEnclaveMemory: return "OutOfEnclaveMemory";
    case ErrorCode::DoubleFree: return "DoubleFree";
    case ErrorCode::EnclaveNotRunning: return "EnclaveNotRunning";
    case ErrorCode::InvalidPhaseTransition: return "InvalidPhaseTransition";
    case ErrorCode::UnreadablePage: return "UnreadablePage";
    case ErrorCode::UnknownRegion: return "UnknownRegion";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::WildAccess: return "WildAccess";
    case ErrorCode::IntegrityFailure: return "IntegrityFailure";
    case ErrorCode::PrematureFlag: return "PrematureFlag";
    case ErrorCode::AlreadyDelivered: return "AlreadyDelivered";
    case ErrorCode::CapabilityUnsupported: return "CapabilityUnsupported";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::TransportFailure: return "TransportFailure";
    case ErrorCode::ProtocolError: return "ProtocolError";
  }
  return "Unknown";
}

}  // namespace optmig
