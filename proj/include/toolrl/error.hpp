#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace toolrl {

enum class ErrorCode {
  InvalidConfig,
  HorizonExceeded,
  InvalidAction,
  EmptyToolSet,
  UnknownMode,
  Timeout,
  NoCapableResource,
  ExhaustedRetries,
  QueueFull,
  PoolClosed,
  Io,
  Parse,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::HorizonExceeded: return "HorizonExceeded";
    case ErrorCode::InvalidAction: return "InvalidAction";
    case ErrorCode::EmptyToolSet: return "EmptyToolSet";
    case ErrorCode::UnknownMode: return "UnknownMode";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::NoCapableResource: return "NoCapableResource";
    case ErrorCode::ExhaustedRetries: return "ExhaustedRetries";
    case ErrorCode::QueueFull: return "QueueFull";
    case ErrorCode::PoolClosed: return "PoolClosed";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace toolrl
