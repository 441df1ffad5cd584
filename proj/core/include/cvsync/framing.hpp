#pragma once

#include <cstdint>
#include <optional>

#include "cvsync/bytes.hpp"

namespace cvsync {

/// Stream framing for TCP: u32 little-endian length, then one envelope.
Bytes frame_for_stream(ByteView envelope);

/// Incremental decoder for the stream framing. Feed arbitrary slices of the
/// byte stream; complete frames come out in order.
class StreamDeframer {
 public:
  /// Throws wire_error when a length prefix exceeds the envelope size limit
  /// or is smaller than an envelope header. The stream is unusable afterwards.
  void feed(ByteView data);

  std::optional<Bytes> next();

  std::size_t buffered() const { return buffer_.size() - read_; }

 private:
  Bytes buffer_;
  std::size_t read_ = 0;
};

}  // namespace cvsync
