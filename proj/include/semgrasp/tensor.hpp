// Minimal C x H x W float tensor used by the network and losses.
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace semgrasp {

struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> v;

  Tensor() = default;
  Tensor(int channels, int height, int width, float fill = 0.0f)
      : c(channels), h(height), w(width),
        v(static_cast<size_t>(channels) * height * width, fill) {}

  size_t size() const { return v.size(); }
  int plane() const { return h * w; }

  float& at(int ch, int y, int x) {
    return v[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  float at(int ch, int y, int x) const {
    return v[(static_cast<size_t>(ch) * h + y) * w + x];
  }

  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

  void fill(float x) { std::fill(v.begin(), v.end(), x); }

  bool all_finite() const {
    for (float x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

}  // namespace semgrasp
