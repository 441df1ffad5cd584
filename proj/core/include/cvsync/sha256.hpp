#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "cvsync/bytes.hpp"

namespace cvsync {

using Sha256Digest = std::array<std::uint8_t, 32>;

Sha256Digest sha256(ByteView data);
std::string digest_hex(const Sha256Digest& d);

}  // namespace cvsync
