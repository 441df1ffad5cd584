#pragma once

#include "cvsync/error.hpp"

namespace cvsync::cli {

enum Exit : int {
  kOk = 0,
  kDivergence = 1,
  kIo = 2,
  kProtocol = 3,
};

/// Input problems (files, parsing, arguments) map to kIo; wire, transport,
/// transfer and join failures map to kProtocol.
int exit_code_for(ErrorCode code);

}  // namespace cvsync::cli
