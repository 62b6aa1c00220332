// Dataset layer: scene annotations, JSON (de)serialization, Cornell
// rectangle-file ingestion, crop/rotate augmentation, mask rasterization and
// RGD channel composition.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "semgrasp/geometry.hpp"
#include "semgrasp/image.hpp"
#include "semgrasp/io_image.hpp"

namespace semgrasp {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Side length every sample has after augmentation.
constexpr int kFrameSize = 480;

struct ObjectAnnotation {
  int category_id = 0;
  std::string category_name;
  std::vector<Vec2> mask;          // simple polygon, pixel coordinates
  std::vector<GraspRect> grasps;   // at least one
  bool mask_approximate = false;   // true when the mask is a hull fallback
};

struct SceneSample {
  ImageU8 image;                   // H x W x 3
  std::string channels = "rgb";    // "rgb" | "rgd" (composition of .image)
  std::vector<ObjectAnnotation> objects;
  std::string source_id;
  std::string image_relpath;       // where .image lives relative to the JSON
  ImageU16 depth;                  // optional 16-bit depth, empty if absent
};

// ---------------------------------------------------------------------------
// Mask rasterization

/// Scanline even-odd fill: a pixel is set iff its center lies inside the
/// polygon. Edges are treated half-open so shared boundaries never double.
inline BitMask rasterize_mask(const std::vector<Vec2>& polygon, int h, int w) {
  BitMask out(h, w, 1, 0);
  const size_t n = polygon.size();
  if (n < 3) return out;
  std::vector<double> xs;
  for (int y = 0; y < h; ++y) {
    const double yc = y + 0.5;
    xs.clear();
    for (size_t i = 0; i < n; ++i) {
      const Vec2& p = polygon[i];
      const Vec2& q = polygon[(i + 1) % n];
      if ((p.y <= yc) != (q.y <= yc))
        xs.push_back(p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y));
    }
    std::sort(xs.begin(), xs.end());
    for (size_t k = 0; k + 1 < xs.size(); k += 2) {
      int x0 = static_cast<int>(std::ceil(xs[k] - 0.5));
      int x1 = static_cast<int>(std::ceil(xs[k + 1] - 0.5));
      x0 = std::max(x0, 0);
      x1 = std::min(x1, w);
      for (int x = x0; x < x1; ++x) out.at(y, x) = 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// RGD composition

/// Replaces the blue channel with depth normalized per image to [0, 255].
/// A constant depth map normalizes to an all-zero channel.
inline ImageU8 build_rgd(const ImageU8& rgb, const ImageF32& depth) {
  if (rgb.c != 3) throw std::invalid_argument("build_rgd: rgb must have 3 channels");
  if (depth.h != rgb.h || depth.w != rgb.w || depth.c != 1)
    throw std::invalid_argument("build_rgd: depth not aligned to rgb");
  float lo = depth.v[0], hi = depth.v[0];
  for (float d : depth.v) {
    if (!std::isfinite(d)) throw std::invalid_argument("build_rgd: non-finite depth");
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  const float span = hi - lo;
  ImageU8 out = rgb;
  for (int y = 0; y < rgb.h; ++y)
    for (int x = 0; x < rgb.w; ++x) {
      const float d = depth.at(y, x);
      const long v = span > 0.0f ? std::lround((d - lo) / span * 255.0f) : 0;
      out.at(y, x, 2) = static_cast<std::uint8_t>(std::clamp(v, 0L, 255L));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Scene JSON

namespace detail {

inline const json& require_field(const json& j, const char* name, const std::string& ctx) {
  auto it = j.find(name);
  if (it == j.end())
    throw std::runtime_error("scene json: missing field '" + std::string(name) + "' in " + ctx);
  return *it;
}

inline std::string depth_relpath(const std::string& image_relpath) {
  fs::path p(image_relpath);
  p.replace_extension();
  return p.string() + "_depth.png";
}

}  // namespace detail

inline json scene_to_json(const SceneSample& s) {
  json j;
  j["image"] = s.image_relpath;
  j["channels"] = s.channels;
  j["objects"] = json::array();
  for (const ObjectAnnotation& o : s.objects) {
    json jo;
    jo["category_id"] = o.category_id;
    jo["category_name"] = o.category_name;
    json m = json::array();
    for (const Vec2& p : o.mask) m.push_back({p.x, p.y});
    jo["mask"] = std::move(m);
    json gs = json::array();
    for (const GraspRect& g : o.grasps)
      gs.push_back({{"x", g.x}, {"y", g.y}, {"theta", g.theta}, {"w", g.w}, {"h", g.h}});
    jo["grasps"] = std::move(gs);
    j["objects"].push_back(std::move(jo));
  }
  return j;
}

/// Writes the annotation JSON plus the image (and depth, when present) next
/// to it. The JSON holds only relative paths.
inline void save_scene_json(const SceneSample& s, const fs::path& json_path) {
  const std::string rel =
      s.image_relpath.empty() ? json_path.stem().string() + ".png" : s.image_relpath;
  const fs::path dir = json_path.parent_path();
  save_rgb(s.image, (dir / rel).string());
  if (!s.depth.empty()) save_depth16(s.depth, (dir / detail::depth_relpath(rel)).string());
  json j = scene_to_json(s);
  j["image"] = rel;
  std::ofstream f(json_path);
  if (!f) throw std::runtime_error("cannot write " + json_path.string());
  f << j.dump(2) << "\n";
}

inline SceneSample load_scene_json(const fs::path& json_path) {
  std::ifstream f(json_path);
  if (!f) throw std::runtime_error("cannot read " + json_path.string());
  json j;
  try {
    f >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("scene json: parse error in " + json_path.string() + ": " + e.what());
  }
  const std::string ctx = json_path.string();

  SceneSample s;
  s.image_relpath = detail::require_field(j, "image", ctx).get<std::string>();
  s.channels = detail::require_field(j, "channels", ctx).get<std::string>();
  if (s.channels != "rgb" && s.channels != "rgd")
    throw std::runtime_error("scene json: field 'channels' must be rgb or rgd in " + ctx);
  s.source_id = json_path.stem().string();

  const fs::path dir = json_path.parent_path();
  s.image = load_rgb((dir / s.image_relpath).string());
  const fs::path dpath = dir / detail::depth_relpath(s.image_relpath);
  if (fs::exists(dpath)) s.depth = load_depth16(dpath.string());

  for (const json& jo : detail::require_field(j, "objects", ctx)) {
    ObjectAnnotation o;
    o.category_id = detail::require_field(jo, "category_id", ctx).get<int>();
    o.category_name = detail::require_field(jo, "category_name", ctx).get<std::string>();
    for (const json& p : detail::require_field(jo, "mask", ctx)) {
      if (!p.is_array() || p.size() != 2)
        throw std::runtime_error("scene json: field 'mask' entries must be [x, y] in " + ctx);
      o.mask.push_back({p[0].get<double>(), p[1].get<double>()});
    }
    for (const json& g : detail::require_field(jo, "grasps", ctx)) {
      GraspRect r{detail::require_field(g, "x", ctx).get<double>(),
                  detail::require_field(g, "y", ctx).get<double>(),
                  detail::require_field(g, "theta", ctx).get<double>(),
                  detail::require_field(g, "w", ctx).get<double>(),
                  detail::require_field(g, "h", ctx).get<double>()};
      require_valid(r);
      o.grasps.push_back(r);
    }
    if (o.grasps.empty())
      throw std::runtime_error("scene json: field 'grasps' must be non-empty in " + ctx);
    s.objects.push_back(std::move(o));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Dataset manifest

struct DatasetManifest {
  std::string root = ".";
  std::string split = "train";
  std::vector<std::string> category_names;  // index == dense category id
  std::vector<std::string> samples;         // scene JSON files relative to root
};

inline void save_manifest(const DatasetManifest& m, const fs::path& path) {
  json j;
  j["root"] = m.root;
  j["split"] = m.split;
  j["categories"] = json::array();
  for (size_t i = 0; i < m.category_names.size(); ++i)
    j["categories"].push_back({{"id", i}, {"name", m.category_names[i]}});
  j["samples"] = m.samples;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

inline DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read manifest " + path.string());
  json j;
  f >> j;
  DatasetManifest m;
  const std::string ctx = path.string();
  m.root = detail::require_field(j, "root", ctx).get<std::string>();
  m.split = detail::require_field(j, "split", ctx).get<std::string>();
  for (const json& c : detail::require_field(j, "categories", ctx)) {
    const int id = detail::require_field(c, "id", ctx).get<int>();
    if (id != static_cast<int>(m.category_names.size()))
      throw std::runtime_error("manifest: category ids must be dense in " + ctx);
    m.category_names.push_back(detail::require_field(c, "name", ctx).get<std::string>());
  }
  for (const json& s : detail::require_field(j, "samples", ctx))
    m.samples.push_back(s.get<std::string>());
  return m;
}

/// Guards the split invariant: a sample file must not feed two different
/// splits. Identical directories are the sanctioned overfit/eval-on-train
/// workflow and pass trivially.
inline void require_disjoint_splits(const fs::path& dir_a, const fs::path& dir_b) {
  if (fs::weakly_canonical(dir_a) == fs::weakly_canonical(dir_b)) return;
  const DatasetManifest a = load_manifest(dir_a / "manifest.json");
  const DatasetManifest b = load_manifest(dir_b / "manifest.json");
  if (a.split == b.split) return;  // two train shards etc. are fine
  for (const std::string& sa : a.samples)
    for (const std::string& sb : b.samples)
      if (fs::weakly_canonical(dir_a / a.root / sa) == fs::weakly_canonical(dir_b / b.root / sb))
        throw std::runtime_error("dataset: sample " + sa + " appears in both '" + a.split +
                                 "' and '" + b.split + "' splits");
}

/// Loads every sample listed by the manifest found in `dir`.
inline std::vector<SceneSample> load_dataset(const fs::path& dir, DatasetManifest* manifest_out = nullptr) {
  const DatasetManifest m = load_manifest(dir / "manifest.json");
  std::vector<SceneSample> out;
  out.reserve(m.samples.size());
  for (const std::string& rel : m.samples) {
    SceneSample s = load_scene_json(dir / m.root / rel);
    for (const ObjectAnnotation& o : s.objects)
      if (o.category_id < 0 || o.category_id >= static_cast<int>(m.category_names.size()))
        throw std::runtime_error("dataset: category_id out of range in " + rel);
    out.push_back(std::move(s));
  }
  if (manifest_out) *manifest_out = m;
  return out;
}

// ---------------------------------------------------------------------------
// Cornell ingestion

struct CornellStats {
  int images = 0;
  int grasps = 0;
  int nan_rects_skipped = 0;
  int samples_skipped = 0;   // image without annotation file
  int mask_sidecars = 0;
};

struct CornellParseResult {
  std::vector<SceneSample> samples;
  CornellStats stats;
};

namespace detail {

inline std::optional<Vec2> parse_vertex_line(const std::string& line, const std::string& file,
                                             int line_no) {
  std::istringstream ss(line);
  double x, y;
  if (!(ss >> x >> y)) {
    // Cornell NaN markers sometimes fail extraction outright
    std::string a, b;
    std::istringstream ss2(line);
    if (ss2 >> a >> b) {
      auto is_nan_token = [](std::string t) {
        std::transform(t.begin(), t.end(), t.begin(), ::tolower);
        return t == "nan" || t == "-nan";
      };
      if (is_nan_token(a) || is_nan_token(b)) return std::nullopt;
    }
    throw std::runtime_error("cornell: malformed vertex line " + file + ":" +
                             std::to_string(line_no));
  }
  if (std::isnan(x) || std::isnan(y)) return std::nullopt;
  return Vec2{x, y};
}

}  // namespace detail

/// Parses one positive-rectangle annotation file: four "x y" lines per grasp.
/// Rectangles containing NaN vertices are skipped and counted.
inline std::vector<GraspRect> parse_cornell_rects(const fs::path& cpos_path,
                                                  int* nan_rects = nullptr) {
  std::ifstream f(cpos_path);
  if (!f) throw std::runtime_error("cannot read " + cpos_path.string());
  std::vector<std::optional<Vec2>> verts;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    verts.push_back(detail::parse_vertex_line(line, cpos_path.string(), line_no));
  }
  if (verts.size() % 4 != 0)
    throw std::runtime_error("cornell: vertex count not a multiple of 4 in " +
                             cpos_path.string());
  std::vector<GraspRect> rects;
  for (size_t i = 0; i < verts.size(); i += 4) {
    if (!verts[i] || !verts[i + 1] || !verts[i + 2] || !verts[i + 3]) {
      if (nan_rects) ++*nan_rects;
      continue;
    }
    rects.push_back(quad_to_rect({*verts[i], *verts[i + 1], *verts[i + 2], *verts[i + 3]}));
  }
  return rects;
}

/// Reads a Cornell-layout directory: per image `<stem>r.png` a rectangle file
/// `<stem>cpos.txt` and an optional mask sidecar `<stem>mask.json`. Without a
/// sidecar the object contour falls back to a padded convex hull of the grasp
/// corners, flagged approximate.
inline CornellParseResult parse_cornell(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("cornell: not a directory: " + dir.string());
  std::vector<fs::path> images;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() > 5 && name.ends_with("r.png")) images.push_back(e.path());
  }
  std::sort(images.begin(), images.end());

  CornellParseResult result;
  std::vector<std::string> category_names;
  auto category_id_for = [&](const std::string& name) {
    for (size_t i = 0; i < category_names.size(); ++i)
      if (category_names[i] == name) return static_cast<int>(i);
    category_names.push_back(name);
    return static_cast<int>(category_names.size() - 1);
  };

  for (const fs::path& img_path : images) {
    const std::string stem = img_path.filename().string().substr(
        0, img_path.filename().string().size() - 5);  // drop "r.png"
    const fs::path cpos = dir / (stem + "cpos.txt");
    if (!fs::exists(cpos)) {
      ++result.stats.samples_skipped;
      continue;
    }
    SceneSample s;
    s.image = load_rgb(img_path.string());
    s.source_id = stem;
    s.image_relpath = img_path.filename().string();

    ObjectAnnotation obj;
    obj.grasps = parse_cornell_rects(cpos, &result.stats.nan_rects_skipped);
    if (obj.grasps.empty()) {
      ++result.stats.samples_skipped;
      continue;
    }

    const fs::path sidecar = dir / (stem + "mask.json");
    if (fs::exists(sidecar)) {
      std::ifstream sf(sidecar);
      json j;
      sf >> j;
      const json& jo = detail::require_field(j, "objects", sidecar.string())[0];
      obj.category_name =
          detail::require_field(jo, "category_name", sidecar.string()).get<std::string>();
      for (const json& p : detail::require_field(jo, "mask", sidecar.string()))
        obj.mask.push_back({p[0].get<double>(), p[1].get<double>()});
      ++result.stats.mask_sidecars;
    } else {
      obj.category_name = "object";
      std::vector<Vec2> corners;
      for (const GraspRect& g : obj.grasps) {
        const QuadGrasp q = rect_to_polygon(g);
        corners.insert(corners.end(), q.begin(), q.end());
      }
      std::vector<Vec2> hull = convex_hull(corners);
      const Vec2 c = polygon_centroid(hull);
      const double pad = 6.0;
      for (Vec2& p : hull) {
        const Vec2 d = p - c;
        const double len = norm(d);
        if (len > 1e-9) p = p + (pad / len) * d;
      }
      obj.mask = std::move(hull);
      obj.mask_approximate = true;
    }
    obj.category_id = category_id_for(obj.category_name);
    result.stats.grasps += static_cast<int>(obj.grasps.size());
    s.objects.push_back(std::move(obj));
    ++result.stats.images;
    result.samples.push_back(std::move(s));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Augmentation

enum class Crop { kCenter, kLeft, kRight };

/// The rotation grid the augmentation scheme enumerates.
inline const std::vector<int>& augment_rotations() {
  static const std::vector<int> r = [] {
    std::vector<int> v;
    for (int d = 0; d < 360; d += 20) v.push_back(d);
    return v;
  }();
  return r;
}

namespace detail {

struct Rigid2 {
  double c = 1.0, s = 0.0;  // rotation
  Vec2 pivot;               // rotate about this point
  Vec2 pre;                 // subtracted before rotating (crop offset)

  Vec2 fwd(Vec2 p) const {
    const Vec2 q = p - pre - pivot;
    return Vec2{q.x * c - q.y * s, q.x * s + q.y * c} + pivot;
  }
  Vec2 inv(Vec2 p) const {
    const Vec2 q = p - pivot;
    return Vec2{q.x * c + q.y * s, -q.x * s + q.y * c} + pivot + pre;
  }
};

inline float bilinear(const ImageU8& img, double x, double y, int ch) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto px = [&](int yy, int xx) -> double {
    if (yy < 0 || yy >= img.h || xx < 0 || xx >= img.w) return 0.0;
    return img.at(yy, xx, ch);
  };
  const double v = px(y0, x0) * (1 - fx) * (1 - fy) + px(y0, x0 + 1) * fx * (1 - fy) +
                   px(y0 + 1, x0) * (1 - fx) * fy + px(y0 + 1, x0 + 1) * fx * fy;
  return static_cast<float>(v);
}

}  // namespace detail

/// Crops a 480x480 window (center / left / right, vertically centered), then
/// rotates about the window center. Grasps and masks follow the same rigid
/// motion; grasps whose centers leave the frame are dropped, and objects left
/// without grasps are dropped with them.
inline SceneSample augment(const SceneSample& sample, Crop crop, int rotation_deg) {
  const int H = sample.image.h, W = sample.image.w;
  if (H < kFrameSize || W < kFrameSize)
    throw std::domain_error("augment: image smaller than 480 in some dimension");
  const auto& rots = augment_rotations();
  if (std::find(rots.begin(), rots.end(), rotation_deg) == rots.end())
    throw std::domain_error("augment: rotation must be one of {0, 20, ..., 340}");

  detail::Rigid2 t;
  const int x0 = crop == Crop::kLeft     ? 0
                 : crop == Crop::kRight  ? W - kFrameSize
                                         : (W - kFrameSize) / 2;
  const int y0 = (H - kFrameSize) / 2;
  t.pre = {static_cast<double>(x0), static_cast<double>(y0)};
  t.pivot = {(kFrameSize - 1) / 2.0, (kFrameSize - 1) / 2.0};
  t.c = std::cos(deg2rad(rotation_deg));
  t.s = std::sin(deg2rad(rotation_deg));

  SceneSample out;
  out.channels = sample.channels;
  out.source_id = sample.source_id + "#" +
                  (crop == Crop::kCenter ? "c" : crop == Crop::kLeft ? "l" : "r") +
                  std::to_string(rotation_deg);
  out.image_relpath = sample.image_relpath;

  out.image = ImageU8(kFrameSize, kFrameSize, 3);
  const bool identity = rotation_deg == 0;
  for (int y = 0; y < kFrameSize; ++y)
    for (int x = 0; x < kFrameSize; ++x) {
      const Vec2 src = t.inv({static_cast<double>(x), static_cast<double>(y)});
      for (int ch = 0; ch < 3; ++ch) {
        const float v = identity
                            ? (src.y >= 0 && src.y < H && src.x >= 0 && src.x < W
                                   ? sample.image.at(static_cast<int>(src.y),
                                                     static_cast<int>(src.x), ch)
                                   : 0.0f)
                            : detail::bilinear(sample.image, src.x, src.y, ch);
        out.image.at(y, x, ch) =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  if (!sample.depth.empty()) {
    out.depth = ImageU16(kFrameSize, kFrameSize, 1);
    for (int y = 0; y < kFrameSize; ++y)
      for (int x = 0; x < kFrameSize; ++x) {
        const Vec2 src = t.inv({static_cast<double>(x), static_cast<double>(y)});
        const int sx = static_cast<int>(std::lround(src.x));
        const int sy = static_cast<int>(std::lround(src.y));
        out.depth.at(y, x) = (sy >= 0 && sy < H && sx >= 0 && sx < W)
                                 ? sample.depth.at(sy, sx)
                                 : 0;
      }
  }

  for (const ObjectAnnotation& o : sample.objects) {
    ObjectAnnotation oo;
    oo.category_id = o.category_id;
    oo.category_name = o.category_name;
    oo.mask_approximate = o.mask_approximate;
    for (const Vec2& p : o.mask) oo.mask.push_back(t.fwd(p));
    for (const GraspRect& g : o.grasps) {
      const Vec2 c = t.fwd({g.x, g.y});
      if (c.x < 0 || c.x >= kFrameSize || c.y < 0 || c.y >= kFrameSize) continue;
      oo.grasps.push_back(
          {c.x, c.y, wrap_angle_deg(g.theta + rotation_deg), g.w, g.h});
    }
    if (!oo.grasps.empty()) out.objects.push_back(std::move(oo));
  }
  return out;
}

/// Full-resolution category label map (0 = background, id + 1 otherwise).
inline std::vector<int> label_map(const SceneSample& s) {
  std::vector<int> labels(static_cast<size_t>(s.image.h) * s.image.w, 0);
  for (const ObjectAnnotation& o : s.objects) {
    const BitMask m = rasterize_mask(o.mask, s.image.h, s.image.w);
    for (size_t i = 0; i < m.v.size(); ++i)
      if (m.v[i]) labels[i] = o.category_id + 1;
  }
  return labels;
}

}  // namespace semgrasp
