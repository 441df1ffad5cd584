#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "cvsync/bytes.hpp"
#include "cvsync/messages.hpp"

namespace cvsync {

inline constexpr std::uint32_t kMinChunkSize = 4 * 1024;
// A chunk plus its u32 index must fit in one envelope payload.
inline constexpr std::uint32_t kMaxChunkSize = static_cast<std::uint32_t>(kMaxPayloadSize - 4);
inline constexpr std::uint32_t kDefaultChunkSize = 64 * 1024;
inline constexpr std::uint64_t kMaxModelSize = std::uint64_t{1} << 32;

ModelAnnounce make_announce(ByteView file, std::uint32_t chunk_size, std::string name);

/// Bytes of chunk `index` as a view into file.
ByteView chunk_view(ByteView file, const ModelAnnounce& a, std::uint32_t index);

struct ChunkedFile {
  ModelAnnounce announce;
  std::vector<ModelChunk> chunks;
};

/// Throws invalid_argument for an empty file or a chunk size outside
/// [kMinChunkSize, kMaxChunkSize].
ChunkedFile chunk_file(ByteView file, std::uint32_t chunk_size, std::string name = {});

enum class ChunkResult : std::uint8_t { accepted, duplicate, completed, corrupt, rejected };

/// Receiver side of a transfer. Chunks may arrive in any order and more than
/// once; the digest is checked when the last missing chunk lands.
class Reassembler {
 public:
  /// Throws invalid_argument when the announce is not a valid transfer.
  explicit Reassembler(ModelAnnounce announce);

  /// On corrupt, the received set is cleared so the sender retransmits
  /// everything. rejected means a bad index or a wrong chunk length.
  ChunkResult add(const ModelChunk& chunk);

  const ModelAnnounce& announce() const { return announce_; }
  const ChunkBitmap& received() const { return received_; }
  bool complete() const { return complete_; }
  std::uint32_t corrupt_count() const { return corrupt_count_; }

  /// Valid once complete().
  const Bytes& bytes() const& { return buffer_; }
  Bytes take() && { return std::move(buffer_); }

 private:
  ModelAnnounce announce_;
  ChunkBitmap received_;
  Bytes buffer_;
  bool complete_ = false;
  std::uint32_t corrupt_count_ = 0;
};

/// Sender side for one receiver: tracks what the receiver acknowledged and
/// when each chunk was last sent.
class ChunkSender {
 public:
  ChunkSender(std::shared_ptr<const Bytes> file, ModelAnnounce announce);

  const ModelAnnounce& announce() const { return announce_; }

  /// The latest ACK replaces the previous view, so a receiver that reset
  /// after a digest mismatch gets a full resend.
  void on_ack(const ChunkBitmap& received);

  bool acknowledged() const { return acked_.size() == announce_.chunk_count() && acked_.all(); }
  bool heard_from_receiver() const { return any_ack_; }

  /// Chunks never sent, or unacknowledged and last sent at least rto_ms ago.
  /// Marks them sent at now_ms. At most max_chunks are returned.
  std::vector<ModelChunk> due(std::int64_t now_ms, std::int64_t rto_ms, std::size_t max_chunks);

  std::uint64_t chunks_sent() const { return chunks_sent_; }

 private:
  std::shared_ptr<const Bytes> file_;
  ModelAnnounce announce_;
  ChunkBitmap acked_;
  std::vector<std::int64_t> last_sent_;
  bool any_ack_ = false;
  std::uint64_t chunks_sent_ = 0;
};

}  // namespace cvsync
