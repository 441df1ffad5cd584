#include "cvsync/framing.hpp"

#include "cvsync/error.hpp"
#include "cvsync/messages.hpp"

namespace cvsync {

Bytes frame_for_stream(ByteView envelope) {
  if (envelope.size() > kMaxFrameSize) throw Error(ErrorCode::wire_error, "envelope exceeds the frame size limit");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(envelope.size()));
  w.raw(envelope);
  return std::move(w).take();
}

void StreamDeframer::feed(ByteView data) {
  if (read_ > 0 && read_ == buffer_.size()) {
    buffer_.clear();
    read_ = 0;
  }
  buffer_.insert(buffer_.end(), data.begin(), data.end());
}

std::optional<Bytes> StreamDeframer::next() {
  if (buffered() < 4) return std::nullopt;
  ByteReader r(ByteView(buffer_).subspan(read_, 4));
  const std::uint32_t len = r.u32("frame length");
  if (len > kMaxFrameSize || len < kEnvelopeHeaderSize) {
    throw Error(ErrorCode::wire_error, "stream frame length " + std::to_string(len) + " is out of range");
  }
  if (buffered() < 4 + static_cast<std::size_t>(len)) return std::nullopt;
  const auto begin = buffer_.begin() + static_cast<std::ptrdiff_t>(read_ + 4);
  Bytes frame(begin, begin + len);
  read_ += 4 + len;
  // Compact once the consumed prefix dominates.
  if (read_ > 1 << 16 && read_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(read_));
    read_ = 0;
  }
  return frame;
}

}  // namespace cvsync
