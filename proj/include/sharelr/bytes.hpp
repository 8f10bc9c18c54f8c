#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sharelr {

using Bytes = std::vector<std::uint8_t>;

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Big-endian append-only writer.
class ByteWriter {
 public:
  ByteWriter() = default;
  explicit ByteWriter(Bytes initial) : out_(std::move(initial)) {}

  void U8(std::uint8_t v) { out_.push_back(v); }
  void U16(std::uint16_t v) { PutBE(v, 2); }
  void U32(std::uint32_t v) { PutBE(v, 4); }
  void U64(std::uint64_t v) { PutBE(v, 8); }
  void Raw(std::span<const std::uint8_t> bytes) {
    out_.insert(out_.end(), bytes.begin(), bytes.end());
  }
  void String(std::string_view s) {
    U32(static_cast<std::uint32_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }

  // Reserves a 4-byte slot, returns its offset for PatchU32.
  std::size_t ReserveU32() {
    std::size_t at = out_.size();
    U32(0);
    return at;
  }
  void PatchU32(std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      out_[at + i] = static_cast<std::uint8_t>(v >> (8 * (3 - i)));
    }
  }

  std::size_t size() const { return out_.size(); }
  Bytes& bytes() { return out_; }
  Bytes Take() { return std::move(out_); }

 private:
  void PutBE(std::uint64_t v, int width) {
    for (int i = width - 1; i >= 0; --i) {
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }

  Bytes out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t U8() { return static_cast<std::uint8_t>(GetBE(1)); }
  std::uint16_t U16() { return static_cast<std::uint16_t>(GetBE(2)); }
  std::uint32_t U32() { return static_cast<std::uint32_t>(GetBE(4)); }
  std::uint64_t U64() { return GetBE(8); }
  std::span<const std::uint8_t> Raw(std::size_t n) {
    Need(n);
    auto out = in_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::string String() {
    std::uint32_t n = U32();
    auto raw = Raw(n);
    return std::string(raw.begin(), raw.end());
  }

  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  void Need(std::size_t n) const {
    if (in_.size() - pos_ < n) {
      throw DecodeError("truncated input: need " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos_));
    }
  }
  std::uint64_t GetBE(int width) {
    Need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 8) | in_[pos_ + i];
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::string ToHex(std::span<const std::uint8_t> bytes);
Bytes FromHex(std::string_view hex);

}  // namespace sharelr
