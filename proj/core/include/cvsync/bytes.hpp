#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cvsync/error.hpp"

namespace cvsync {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

// Little-endian append-only writer.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(Bytes initial) : out_(std::move(initial)) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void raw(ByteView bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }
  void raw(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

  // u16 length prefix; throws wire_error past 65535 bytes.
  void short_string(std::string_view s);

  std::size_t size() const { return out_.size(); }
  const Bytes& bytes() const& { return out_; }
  Bytes take() && { return std::move(out_); }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }

  Bytes out_;
};

// Bounds-checked little-endian reader. Every read past the end throws
// wire_error naming the field and offset.
class ByteReader {
 public:
  explicit ByteReader(ByteView data) : data_(data) {}

  std::uint8_t u8(const char* field) { return get_le<std::uint8_t>(field); }
  std::uint16_t u16(const char* field) { return get_le<std::uint16_t>(field); }
  std::uint32_t u32(const char* field) { return get_le<std::uint32_t>(field); }
  std::uint64_t u64(const char* field) { return get_le<std::uint64_t>(field); }
  float f32(const char* field) { return std::bit_cast<float>(get_le<std::uint32_t>(field)); }
  double f64(const char* field) { return std::bit_cast<double>(get_le<std::uint64_t>(field)); }
  ByteView raw(std::size_t n, const char* field);
  std::string short_string(const char* field);
  ByteView rest() {
    auto r = data_.subspan(pos_);
    pos_ = data_.size();
    return r;
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  // Throws wire_error if unread bytes remain.
  void expect_end(const char* what) const;

 private:
  void require(std::size_t n, const char* field) const;

  template <typename T>
  T get_le(const char* field) {
    require(sizeof(T), field);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v = static_cast<T>(v | (static_cast<T>(data_[pos_ + i]) << (8 * i)));
    }
    pos_ += sizeof(T);
    return v;
  }

  ByteView data_;
  std::size_t pos_ = 0;
};

std::string to_hex(ByteView bytes);
Bytes from_hex(std::string_view hex);

}  // namespace cvsync
