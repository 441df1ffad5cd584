#include "cvsync/transfer.hpp"

#include <algorithm>
#include <limits>

#include "cvsync/error.hpp"

namespace cvsync {

namespace {

constexpr std::int64_t kNeverSent = std::numeric_limits<std::int64_t>::min();

void check_chunk_size(std::uint32_t chunk_size) {
  if (chunk_size < kMinChunkSize || chunk_size > kMaxChunkSize) {
    throw Error(ErrorCode::invalid_argument, "chunk size " + std::to_string(chunk_size) + " outside [" +
                                                 std::to_string(kMinChunkSize) + ", " +
                                                 std::to_string(kMaxChunkSize) + "]");
  }
}

}  // namespace

ModelAnnounce make_announce(ByteView file, std::uint32_t chunk_size, std::string name) {
  check_chunk_size(chunk_size);
  if (file.empty()) throw Error(ErrorCode::invalid_argument, "cannot transfer an empty file");
  if (file.size() > kMaxModelSize) throw Error(ErrorCode::invalid_argument, "model file too large");
  ModelAnnounce a;
  a.name = std::move(name);
  a.total_size = file.size();
  a.chunk_size = chunk_size;
  a.sha256 = sha256(file);
  return a;
}

ByteView chunk_view(ByteView file, const ModelAnnounce& a, std::uint32_t index) {
  const std::uint64_t begin = std::uint64_t{index} * a.chunk_size;
  if (index >= a.chunk_count() || file.size() != a.total_size) {
    throw Error(ErrorCode::invalid_argument, "chunk index out of range");
  }
  const std::uint64_t len = std::min<std::uint64_t>(a.chunk_size, a.total_size - begin);
  return file.subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(len));
}

ChunkedFile chunk_file(ByteView file, std::uint32_t chunk_size, std::string name) {
  ChunkedFile out;
  out.announce = make_announce(file, chunk_size, std::move(name));
  const auto n = out.announce.chunk_count();
  out.chunks.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto v = chunk_view(file, out.announce, i);
    out.chunks.push_back(ModelChunk{i, Bytes(v.begin(), v.end())});
  }
  return out;
}

Reassembler::Reassembler(ModelAnnounce announce) : announce_(std::move(announce)) {
  if (announce_.total_size == 0 || announce_.total_size > kMaxModelSize || announce_.chunk_size == 0 ||
      announce_.chunk_size > kMaxChunkSize) {
    throw Error(ErrorCode::invalid_argument, "announce does not describe a valid transfer");
  }
  received_ = ChunkBitmap(announce_.chunk_count());
  buffer_.assign(static_cast<std::size_t>(announce_.total_size), 0);
}

ChunkResult Reassembler::add(const ModelChunk& chunk) {
  const auto n = announce_.chunk_count();
  if (chunk.index >= n) return ChunkResult::rejected;
  const std::uint64_t begin = std::uint64_t{chunk.index} * announce_.chunk_size;
  const std::uint64_t len = std::min<std::uint64_t>(announce_.chunk_size, announce_.total_size - begin);
  if (chunk.data.size() != len) return ChunkResult::rejected;
  if (complete_ || received_.test(chunk.index)) return ChunkResult::duplicate;

  std::copy(chunk.data.begin(), chunk.data.end(), buffer_.begin() + static_cast<std::ptrdiff_t>(begin));
  received_.set(chunk.index);
  if (!received_.all()) return ChunkResult::accepted;

  if (sha256(buffer_) != announce_.sha256) {
    ++corrupt_count_;
    received_.clear();
    return ChunkResult::corrupt;
  }
  complete_ = true;
  return ChunkResult::completed;
}

ChunkSender::ChunkSender(std::shared_ptr<const Bytes> file, ModelAnnounce announce)
    : file_(std::move(file)),
      announce_(std::move(announce)),
      acked_(announce_.chunk_count()),
      last_sent_(announce_.chunk_count(), kNeverSent) {
  if (!file_ || file_->size() != announce_.total_size) {
    throw Error(ErrorCode::invalid_argument, "sender file does not match its announce");
  }
}

void ChunkSender::on_ack(const ChunkBitmap& received) {
  if (received.size() != acked_.size()) return;
  acked_ = received;
  any_ack_ = true;
}

std::vector<ModelChunk> ChunkSender::due(std::int64_t now_ms, std::int64_t rto_ms, std::size_t max_chunks) {
  std::vector<ModelChunk> out;
  for (std::uint32_t i = 0; i < acked_.size() && out.size() < max_chunks; ++i) {
    if (acked_.test(i)) continue;
    if (last_sent_[i] != kNeverSent && now_ms - last_sent_[i] < rto_ms) continue;
    auto v = chunk_view(*file_, announce_, i);
    out.push_back(ModelChunk{i, Bytes(v.begin(), v.end())});
    last_sent_[i] = now_ms;
  }
  chunks_sent_ += out.size();
  return out;
}

}  // namespace cvsync
