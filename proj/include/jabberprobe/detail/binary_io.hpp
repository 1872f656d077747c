#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "jabberprobe/error.hpp"

namespace jabberprobe::detail {

// Little-endian byte sink.
class ByteWriter {
public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  template <typename U>
  void unsigned_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  void u8(std::uint8_t v) { unsigned_le(v); }
  void u16(std::uint16_t v) { unsigned_le(v); }
  void u32(std::uint32_t v) { unsigned_le(v); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { unsigned_le(std::bit_cast<std::uint64_t>(v)); }

  const std::string& data() const { return buf_; }
  std::string release() { return std::move(buf_); }

private:
  std::string buf_;
};

// Little-endian byte source over an in-memory buffer; every read is bounds
// checked and failures report the offset at which the record was cut short.
class ByteReader {
public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename U>
  U unsigned_le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::uint8_t u8(const char* what) { return unsigned_le<std::uint8_t>(what); }
  std::uint16_t u16(const char* what) { return unsigned_le<std::uint16_t>(what); }
  std::uint32_t u32(const char* what) { return unsigned_le<std::uint32_t>(what); }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(unsigned_le<std::uint64_t>(what)); }

private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw FormatError(std::string("truncated record: ") + what, pos_);
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace jabberprobe::detail
