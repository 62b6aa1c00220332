// Deterministic synthetic desk scenes: elongated shapes on a textured
// background with exact masks and centroid grasps. Stands in for a captured
// multi-object dataset in tests and the CLI.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "semgrasp/data.hpp"
#include "semgrasp/geometry.hpp"
#include "semgrasp/rng.hpp"

namespace semgrasp {

inline const std::vector<std::string>& synth_categories() {
  static const std::vector<std::string> names{"bar", "ellipse", "capsule"};
  return names;
}

struct SynthOptions {
  int size = kFrameSize;  // square frame, multiple of 32
  bool clutter = false;   // unlabeled distractor shapes in the background
};

namespace detail {

// Cheap deterministic per-pixel hash, independent of the rng stream.
inline std::uint32_t pixel_hash(std::uint32_t x, std::uint32_t y, std::uint32_t salt) {
  std::uint32_t h = x * 0x8DA6B343u ^ y * 0xD8163841u ^ salt * 0xCB1AB31Fu;
  h ^= h >> 13;
  h *= 0x9E3779B1u;
  h ^= h >> 16;
  return h;
}

struct SynthShape {
  int category = 0;
  Vec2 center;
  double length = 0.0;
  double thickness = 0.0;
  double angle = 0.0;  // major-axis direction, degrees in [-90, 90)
  std::vector<Vec2> polygon;
};

inline std::vector<Vec2> shape_polygon(int category, Vec2 c, double L, double T, double phi) {
  const double cs = std::cos(deg2rad(phi)), sn = std::sin(deg2rad(phi));
  auto local = [&](double u, double v) -> Vec2 {
    return {c.x + u * cs - v * sn, c.y + u * sn + v * cs};
  };
  std::vector<Vec2> poly;
  if (category == 0) {  // bar
    poly = {local(-L / 2, -T / 2), local(L / 2, -T / 2), local(L / 2, T / 2),
            local(-L / 2, T / 2)};
  } else if (category == 1) {  // ellipse, 48-gon
    for (int i = 0; i < 48; ++i) {
      const double t = 2.0 * kPi * i / 48.0;
      poly.push_back(local(L / 2 * std::cos(t), T / 2 * std::sin(t)));
    }
  } else {  // capsule: straight body plus semicircular caps
    const double r = T / 2, body = std::max(L / 2 - r, r);
    for (int i = 0; i <= 12; ++i) {  // right cap, -90..+90
      const double t = -kPi / 2 + kPi * i / 12.0;
      poly.push_back(local(body + r * std::cos(t), r * std::sin(t)));
    }
    for (int i = 0; i <= 12; ++i) {  // left cap, +90..+270
      const double t = kPi / 2 + kPi * i / 12.0;
      poly.push_back(local(-body + r * std::cos(t), r * std::sin(t)));
    }
  }
  return poly;
}

inline SynthShape make_shape(Rng& rng, int size, double scale, const std::vector<SynthShape>& placed) {
  SynthShape s;
  s.category = rng.uniform_int(0, 2);
  s.length = rng.uniform(0.17, 0.27) * size * scale;
  s.thickness = rng.uniform(0.26, 0.40) * s.length;
  s.angle = rng.uniform(-90.0, 90.0);
  const double margin = s.length / 2 + 10.0;
  for (int attempt = 0; attempt < 100; ++attempt) {
    s.center = {rng.uniform(margin, size - margin), rng.uniform(margin, size - margin)};
    bool clear = true;
    for (const SynthShape& p : placed) {
      const double min_dist = (s.length + p.length) / 2 + 12.0;
      if (norm(s.center - p.center) < min_dist) {
        clear = false;
        break;
      }
    }
    if (clear) {
      s.polygon = shape_polygon(s.category, s.center, s.length, s.thickness, s.angle);
      return s;
    }
  }
  throw std::runtime_error("synth_scene: shape placement failed after 100 retries");
}

inline void draw_shape(ImageU8& img, ImageU16& depth, const SynthShape& s,
                       std::uint32_t salt, Rng& rng) {
  static constexpr int kPalette[3][3] = {{182, 64, 58}, {58, 78, 180}, {62, 158, 84}};
  int base[3];
  for (int ch = 0; ch < 3; ++ch)
    base[ch] = kPalette[s.category][ch] + rng.uniform_int(-18, 18);
  const std::uint16_t depth_base =
      static_cast<std::uint16_t>(980 - 45 * s.category + rng.uniform_int(-10, 10));

  // lengthwise shading ramp, as if lit from one end
  const double cs = std::cos(deg2rad(s.angle)), sn = std::sin(deg2rad(s.angle));
  const double shade_gain = 28.0 / std::max(s.length, 1.0);

  const BitMask m = rasterize_mask(s.polygon, img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      if (!m.at(y, x)) continue;
      const int grain = static_cast<int>(pixel_hash(x, y, salt) % 17) - 8;
      const double along = (x - s.center.x) * cs + (y - s.center.y) * sn;
      const int shade = static_cast<int>(along * shade_gain);
      for (int ch = 0; ch < 3; ++ch)
        img.at(y, x, ch) =
            static_cast<std::uint8_t>(std::clamp(base[ch] + grain + shade, 0, 255));
      depth.at(y, x) = static_cast<std::uint16_t>(depth_base + grain);
    }
}

}  // namespace detail

/// Deterministic scene with n_objects non-overlapping shapes. Masks are the
/// exact rasterized supports; each object carries one grasp across its minor
/// axis at the centroid (w = 0.6 * length, h = 1.5 * thickness).
inline SceneSample synth_scene(std::uint64_t seed, int n_objects,
                               const SynthOptions& opt = {}) {
  if (n_objects < 1 || n_objects > 5)
    throw std::domain_error("synth_scene: n_objects outside [1, 5]");
  if (opt.size < 160 || opt.size % 32 != 0)
    throw std::domain_error("synth_scene: size must be a multiple of 32, at least 160");

  Rng rng(seed);
  const int size = opt.size;
  const std::uint32_t salt = static_cast<std::uint32_t>(seed ^ (seed >> 32));

  SceneSample s;
  s.channels = "rgb";
  s.source_id = "synth-" + std::to_string(seed) + "-" + std::to_string(n_objects);
  s.image = ImageU8(size, size, 3);
  s.depth = ImageU16(size, size, 1);

  // textured background: soft gradient plus hash grain
  const double gx = rng.uniform(-18.0, 18.0) / size;
  const double gy = rng.uniform(-18.0, 18.0) / size;
  const int bg = rng.uniform_int(96, 126);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int grad = static_cast<int>(gx * x + gy * y);
      const int grain = static_cast<int>(detail::pixel_hash(x, y, salt) % 21) - 10;
      const int v = std::clamp(bg + grad + grain, 0, 255);
      s.image.at(y, x, 0) = static_cast<std::uint8_t>(v);
      s.image.at(y, x, 1) = static_cast<std::uint8_t>(std::clamp(v + 4, 0, 255));
      s.image.at(y, x, 2) = static_cast<std::uint8_t>(std::clamp(v - 3, 0, 255));
      s.depth.at(y, x) = static_cast<std::uint16_t>(1420 - 180 * y / size + grain);
    }

  std::vector<detail::SynthShape> placed;
  for (int i = 0; i < n_objects; ++i)
    placed.push_back(detail::make_shape(rng, size, 1.0, placed));
  if (opt.clutter) {
    const int n_clutter = rng.uniform_int(2, 4);
    for (int i = 0; i < n_clutter; ++i)
      placed.push_back(detail::make_shape(rng, size, 0.8, placed));
  }

  for (size_t i = 0; i < placed.size(); ++i) {
    const detail::SynthShape& sh = placed[i];
    detail::draw_shape(s.image, s.depth, sh, salt + static_cast<std::uint32_t>(i) * 7919u, rng);
    if (i >= static_cast<size_t>(n_objects)) continue;  // clutter stays unlabeled
    ObjectAnnotation o;
    o.category_id = sh.category;
    o.category_name = synth_categories()[sh.category];
    o.mask = sh.polygon;
    // parallel grasps spaced along the major axis, like hand-annotated data
    const Vec2 c = polygon_centroid(sh.polygon);
    const double cs = std::cos(deg2rad(sh.angle)), sn = std::sin(deg2rad(sh.angle));
    for (const double off : {-0.45, -0.3, -0.15, 0.0, 0.15, 0.3, 0.45}) {
      const double d = off * sh.length;
      o.grasps.push_back({c.x + d * cs, c.y + d * sn, wrap_angle_deg(sh.angle + 90.0),
                          0.6 * sh.length, 1.5 * sh.thickness});
    }
    s.objects.push_back(std::move(o));
  }
  return s;
}

}  // namespace semgrasp
