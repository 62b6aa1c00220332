// SHA-1 for content hashing of dataset manifests (reproducibility stamps,
// not security).
#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace semgrasp::detail {

class Sha1 {
 public:
  void update(const void* data, size_t len) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    total_ += len;
    while (len > 0) {
      const size_t take = std::min(len, sizeof(buf_) - fill_);
      std::memcpy(buf_ + fill_, p, take);
      fill_ += take;
      p += take;
      len -= take;
      if (fill_ == sizeof(buf_)) {
        process();
        fill_ = 0;
      }
    }
  }

  std::string hex_digest() {
    const std::uint64_t bits = total_ * 8;
    const std::uint8_t one = 0x80;
    update(&one, 1);
    const std::uint8_t zero = 0;
    while (fill_ != 56) update(&zero, 1);
    std::uint8_t len_be[8];
    for (int i = 0; i < 8; ++i) len_be[i] = static_cast<std::uint8_t>(bits >> (56 - 8 * i));
    update(len_be, 8);

    static const char* hexd = "0123456789abcdef";
    std::string out;
    for (std::uint32_t word : h_)
      for (int i = 3; i >= 0; --i) {
        const std::uint8_t b = static_cast<std::uint8_t>(word >> (8 * i));
        out.push_back(hexd[b >> 4]);
        out.push_back(hexd[b & 0xf]);
      }
    return out;
  }

 private:
  static std::uint32_t rotl(std::uint32_t x, int n) { return (x << n) | (x >> (32 - n)); }

  void process() {
    std::uint32_t w[80];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t(buf_[4 * i]) << 24) | (std::uint32_t(buf_[4 * i + 1]) << 16) |
             (std::uint32_t(buf_[4 * i + 2]) << 8) | buf_[4 * i + 3];
    for (int i = 16; i < 80; ++i) w[i] = rotl(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);

    std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4];
    for (int i = 0; i < 80; ++i) {
      std::uint32_t f, k;
      if (i < 20) {
        f = (b & c) | (~b & d);
        k = 0x5A827999;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDC;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6;
      }
      const std::uint32_t t = rotl(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rotl(b, 30);
      b = a;
      a = t;
    }
    h_[0] += a;
    h_[1] += b;
    h_[2] += c;
    h_[3] += d;
    h_[4] += e;
  }

  std::array<std::uint32_t, 5> h_{0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476,
                                  0xC3D2E1F0};
  std::uint8_t buf_[64];
  size_t fill_ = 0;
  std::uint64_t total_ = 0;
};

inline std::string sha1_hex(std::string_view data) {
  Sha1 s;
  s.update(data.data(), data.size());
  return s.hex_digest();
}

}  // namespace semgrasp::detail
