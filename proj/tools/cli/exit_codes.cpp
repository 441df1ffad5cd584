#include "exit_codes.hpp"

namespace cvsync::cli {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::io_error:
    case ErrorCode::parse_error:
    case ErrorCode::invalid_argument:
    case ErrorCode::insufficient_overlap:
    case ErrorCode::degenerate_configuration:
    case ErrorCode::stale_annotation:
      return kIo;
    case ErrorCode::wire_error:
    case ErrorCode::transfer_corrupt:
    case ErrorCode::transport_error:
    case ErrorCode::join_refused:
      return kProtocol;
  }
  return kProtocol;
}

}  // namespace cvsync::cli
