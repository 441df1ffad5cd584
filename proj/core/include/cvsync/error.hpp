#pragma once

#include <stdexcept>
#include <string>

namespace cvsync {

enum class ErrorCode {
  invalid_argument,
  parse_error,
  wire_error,
  insufficient_overlap,
  degenerate_configuration,
  stale_annotation,
  transfer_corrupt,
  transport_error,
  join_refused,
  io_error,
};

const char* to_string(ErrorCode code) noexcept;

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cvsync
