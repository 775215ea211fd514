#pragma once

// Little-endian byte buffers shared by the binary containers.

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "t4c/error.hpp"

namespace t4c {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void magic(std::string_view m) { bytes(m.data(), m.size()); }
  template <class U>
  void le(U v) {
    static_assert(std::is_integral_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
    }
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    le(bits);
  }
  void str(std::string_view s) {
    le(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size, std::string what)
      : p_(data), n_(size), what_(std::move(what)) {}
  explicit ByteReader(const std::vector<std::uint8_t>& v, std::string what)
      : ByteReader(v.data(), v.size(), std::move(what)) {}

  std::size_t offset() const noexcept { return off_; }
  std::size_t remaining() const noexcept { return n_ - off_; }

  void need(std::size_t k) const {
    if (remaining() < k) {
      throw FormatError(what_ + ": truncated, needed " + std::to_string(k) + " more bytes, " +
                            std::to_string(remaining()) + " left",
                        off_);
    }
  }
  void expect_magic(std::string_view m) {
    need(m.size());
    if (std::memcmp(p_ + off_, m.data(), m.size()) != 0) throw FormatError(what_ + ": bad magic", off_);
    off_ += m.size();
  }
  template <class U>
  U le() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(p_[off_ + i]) << (8 * i);
    off_ += sizeof(U);
    return static_cast<U>(v);
  }
  float f32() {
    const auto bits = le<std::uint32_t>();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str() {
    const auto len = le<std::uint32_t>();
    need(len);
    std::string s(reinterpret_cast<const char*>(p_ + off_), len);
    off_ += len;
    return s;
  }
  const std::uint8_t* take(std::size_t k) {
    need(k);
    const auto* at = p_ + off_;
    off_ += k;
    return at;
  }
  [[noreturn]] void fail(const std::string& msg) const { throw FormatError(what_ + ": " + msg, off_); }
  void expect_end() const {
    if (remaining() != 0) fail(std::to_string(remaining()) + " trailing bytes");
  }

 private:
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t off_ = 0;
  std::string what_;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace t4c
