// Dense row-major H x W x C image container plus the binary mask alias.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace semgrasp {

template <class T>
struct Image {
  int h = 0;
  int w = 0;
  int c = 1;
  std::vector<T> v;

  Image() = default;
  Image(int height, int width, int channels, T fill = T{})
      : h(height), w(width), c(channels),
        v(static_cast<size_t>(height) * width * channels, fill) {}

  T& at(int y, int x, int ch = 0) {
    return v[(static_cast<size_t>(y) * w + x) * c + ch];
  }
  T at(int y, int x, int ch = 0) const {
    return v[(static_cast<size_t>(y) * w + x) * c + ch];
  }

  bool empty() const { return v.empty(); }
  bool same_shape(const Image& o) const { return h == o.h && w == o.w && c == o.c; }

  friend bool operator==(const Image& a, const Image& b) {
    return a.h == b.h && a.w == b.w && a.c == b.c && a.v == b.v;
  }
};

using ImageU8 = Image<std::uint8_t>;
using ImageU16 = Image<std::uint16_t>;
using ImageF32 = Image<float>;

/// Binary mask at image resolution; values restricted to {0, 1}.
using BitMask = Image<std::uint8_t>;

inline ImageF32 to_float(const ImageU16& d) {
  ImageF32 out(d.h, d.w, d.c);
  for (size_t i = 0; i < d.v.size(); ++i) out.v[i] = static_cast<float>(d.v[i]);
  return out;
}

}  // namespace semgrasp
