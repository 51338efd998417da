#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "zksplit/errors.hpp"
#include "zksplit/field.hpp"

namespace zksplit::zk {

/// Little-endian append-only encoder.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void i64(std::int64_t v) { le(static_cast<std::uint64_t>(v), 8); }
  void fp(Fp v) { le(v.value(), 8); }
  void fps(std::span<const Fp> v) {
    u64(v.size());
    for (auto x : v) fp(x);
  }
  void bytes(std::span<const std::uint8_t> b) {
    u64(b.size());
    raw(b);
  }
  void raw(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void str(const std::string& s) { bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}); }

  std::vector<std::uint8_t>& data() { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked decoder; any overrun throws ShapeError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(le(8)); }
  Fp fp() {
    const std::uint64_t v = le(8);
    if (v >= Fp::kModulus) throw ShapeError("non-canonical field element");
    return Fp(v);
  }
  std::vector<Fp> fps() {
    const std::uint64_t n = count(8);
    std::vector<Fp> out;
    out.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(fp());
    return out;
  }
  std::vector<std::uint8_t> bytes() {
    const std::uint64_t n = count(1);
    std::vector<std::uint8_t> out(b_.begin() + static_cast<std::ptrdiff_t>(at_),
                                  b_.begin() + static_cast<std::ptrdiff_t>(at_ + n));
    at_ += n;
    return out;
  }
  std::string str() {
    const auto b = bytes();
    return {b.begin(), b.end()};
  }
  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto s = b_.subspan(at_, n);
    at_ += n;
    return s;
  }

  bool done() const { return at_ == b_.size(); }
  void expect_done() const {
    if (!done()) throw ShapeError("trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (b_.size() - at_ < n) throw ShapeError("truncated message");
  }
  // Reads a length prefix and checks that at least n * unit bytes remain.
  std::uint64_t count(std::size_t unit) {
    const std::uint64_t n = u64();
    if (n > (b_.size() - at_) / unit) throw ShapeError("length prefix exceeds message");
    return n;
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | b_[at_ + static_cast<std::size_t>(i)];
    at_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> b_;
  std::size_t at_ = 0;
};

}  // namespace zksplit::zk
