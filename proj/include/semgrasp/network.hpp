// The four-unit model: five-stage backbone, top-down feature fusion,
// per-object feature filtering (mask Hadamard gate) and the dense grasp
// detector head, plus whole-scene prediction with per-object top-1 retention.
#pragma once

#include <array>
#include <deque>
#include <memory>
#include <optional>
#include <queue>
#include <vector>

#include "semgrasp/data.hpp"
#include "semgrasp/losses.hpp"
#include "semgrasp/nn.hpp"

namespace semgrasp {

enum class GraspFeature { kF3, kC2, kC3, kC4 };

inline const char* to_string(GraspFeature f) {
  switch (f) {
    case GraspFeature::kF3: return "F3";
    case GraspFeature::kC2: return "C2";
    case GraspFeature::kC3: return "C3";
    case GraspFeature::kC4: return "C4";
  }
  return "?";
}

inline GraspFeature grasp_feature_from_string(const std::string& s) {
  if (s == "F3") return GraspFeature::kF3;
  if (s == "C2") return GraspFeature::kC2;
  if (s == "C3") return GraspFeature::kC3;
  if (s == "C4") return GraspFeature::kC4;
  throw std::invalid_argument("unknown grasp feature: " + s);
}

inline int grasp_stride(GraspFeature f) {
  switch (f) {
    case GraspFeature::kF3: return 8;
    case GraspFeature::kC2: return 4;
    case GraspFeature::kC3: return 8;
    case GraspFeature::kC4: return 16;
  }
  return 8;
}

struct NetConfig {
  std::array<int, 5> channels{16, 32, 64, 64, 64};
  int num_categories = 3;  // object categories, background excluded
  GraspFeature grasp_feature = GraspFeature::kC3;
  bool feature_fusion = true;
  bool feature_filtering = true;
  int seg_hidden = 16;
  int grasp_hidden = 24;
  int min_component_area = 64;
};

/// Backbone outputs F1..F5 at strides 2, 4, 8, 16, 32.
struct FeaturePyramid {
  std::array<NodeP, 5> f;
};

/// Fused maps C1..C4 at strides 2, 4, 8, 16; channels telescope upward.
struct FusedMaps {
  std::array<NodeP, 4> c;
};

struct GraspHeadOut {
  NodeP cls;  // kGraspClasses planes
  NodeP reg;  // 4 planes
};

struct Detection {
  int category_id = 0;
  GraspRect grasp;
  double confidence = 0.0;
  int object_index = -1;  // input-mask index in teacher-forced mode
};

// ---------------------------------------------------------------------------
// Mask utilities

/// Stride-fold max-pool reduction: a grid cell is 1 if any covered pixel is 1
/// (thin objects survive the reduction this way).
inline std::shared_ptr<Tensor> reduce_mask(const BitMask& mask, int stride) {
  if (mask.h % stride || mask.w % stride)
    throw std::invalid_argument("reduce_mask: mask not divisible by stride");
  auto out = std::make_shared<Tensor>(1, mask.h / stride, mask.w / stride);
  for (int y = 0; y < mask.h; ++y)
    for (int x = 0; x < mask.w; ++x)
      if (mask.at(y, x)) out->at(0, y / stride, x / stride) = 1.0f;
  return out;
}

/// Hadamard gate of a feature map with a full-resolution binary mask reduced
/// to the feature stride.
inline NodeP binarize_and_filter(Tape& tape, NodeP feature, const BitMask& mask, int stride) {
  if (feature->val.h * stride != mask.h || feature->val.w * stride != mask.w)
    throw std::invalid_argument("binarize_and_filter: feature/mask geometry mismatch");
  return mul_mask(tape, feature, reduce_mask(mask, stride));
}

/// Connected components (8-connectivity) of each non-background category in a
/// label map; components below min_area pixels are dropped. Deterministic
/// scan order.
inline std::vector<std::pair<int, BitMask>> split_objects(const std::vector<int>& labels,
                                                          int h, int w,
                                                          int min_area = 64) {
  std::vector<std::pair<int, BitMask>> out;
  std::vector<char> visited(labels.size(), 0);
  std::vector<int> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int idx = y * w + x;
      const int cat = labels[idx];
      if (cat == 0 || visited[idx]) continue;
      BitMask mask(h, w, 1, 0);
      int area = 0;
      stack.assign(1, idx);
      visited[idx] = 1;
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        mask.v[cur] = 1;
        ++area;
        const int cy = cur / w, cx = cur % w;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dy && !dx) continue;
            const int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const int nidx = ny * w + nx;
            if (!visited[nidx] && labels[nidx] == cat) {
              visited[nidx] = 1;
              stack.push_back(nidx);
            }
          }
      }
      if (area >= min_area) out.emplace_back(cat - 1, std::move(mask));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Model

class GraspNet {
 public:
  GraspNet(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    Rng rng = Rng(seed).derive(0x6e657477u);  // weight-init stream
    const auto& ch = cfg_.channels;
    int in = 3;
    for (int s = 0; s < 5; ++s) {
      backbone_.emplace_back(params_, "backbone" + std::to_string(s + 1), in, ch[s], 3, rng);
      in = ch[s];
    }
    const int c1_ch = cfg_.feature_fusion ? ch[0] + ch[1] + ch[2] + ch[3] + ch[4] : ch[0];
    seg_in_ = std::make_unique<Conv>(params_, "seg.in", c1_ch, cfg_.seg_hidden, 1, rng);
    seg_mid_ = std::make_unique<Conv>(params_, "seg.mid", cfg_.seg_hidden, cfg_.seg_hidden, 3, rng);
    seg_out_ = std::make_unique<Conv>(params_, "seg.out", cfg_.seg_hidden,
                                      cfg_.num_categories + 1, 1, rng);
    grasp_in_ = std::make_unique<Conv>(params_, "grasp.in", grasp_input_channels(), cfg_.grasp_hidden, 1, rng);
    grasp_mid_ = std::make_unique<Conv>(params_, "grasp.mid", cfg_.grasp_hidden, cfg_.grasp_hidden, 3, rng);
    grasp_out_ = std::make_unique<Conv>(params_, "grasp.out", cfg_.grasp_hidden,
                                        kGraspClasses + 4, 1, rng);
    // non-graspable prior: most cells are background, start them there
    grasp_out_->bias().w.v[0] = 2.0f;
  }

  const NetConfig& config() const { return cfg_; }

  int grasp_input_channels() const {
    const auto& ch = cfg_.channels;
    if (!cfg_.feature_fusion || cfg_.grasp_feature == GraspFeature::kF3) return ch[2];
    switch (cfg_.grasp_feature) {
      case GraspFeature::kC2: return ch[1] + ch[2] + ch[3] + ch[4];
      case GraspFeature::kC3: return ch[2] + ch[3] + ch[4];
      case GraspFeature::kC4: return ch[3] + ch[4];
      default: return ch[2];
    }
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    for (Param& p : params_) out.push_back(&p);
    return out;
  }

  /// Five stages of conv3x3 + relu + stride-2 max-pool. Input must be CHW
  /// float in [0, 1] with spatial size divisible by 32.
  FeaturePyramid backbone(Tape& tape, NodeP image) const {
    if (image->val.h % 32 || image->val.w % 32)
      throw std::domain_error("backbone: input size must be divisible by 32");
    FeaturePyramid pyr;
    NodeP x = image;
    for (int s = 0; s < 5; ++s) {
      x = maxpool2(tape, relu(tape, backbone_[s](tape, x)));
      pyr.f[s] = x;
    }
    return pyr;
  }

  /// Top-down fusion: Ck = concat(up2(deeper), Fk); no weights of its own.
  FusedMaps fuse(Tape& tape, const FeaturePyramid& pyr) const {
    FusedMaps out;
    out.c[3] = concat(tape, upsample2(tape, pyr.f[4]), pyr.f[3]);
    out.c[2] = concat(tape, upsample2(tape, out.c[3]), pyr.f[2]);
    out.c[1] = concat(tape, upsample2(tape, out.c[2]), pyr.f[1]);
    out.c[0] = concat(tape, upsample2(tape, out.c[1]), pyr.f[0]);
    return out;
  }

  /// (N+1)-channel segmentation logits at stride 2 from C1 (or F1 when
  /// fusion is disabled).
  NodeP segment(Tape& tape, NodeP c1) const {
    NodeP x = relu(tape, (*seg_in_)(tape, c1));
    x = relu(tape, (*seg_mid_)(tape, x));
    return (*seg_out_)(tape, x);
  }

  /// The feature map the grasp detector consumes, per configuration.
  NodeP grasp_input(const FeaturePyramid& pyr, const FusedMaps* fused) const {
    if (!cfg_.feature_fusion || cfg_.grasp_feature == GraspFeature::kF3) return pyr.f[2];
    switch (cfg_.grasp_feature) {
      case GraspFeature::kC2: return fused->c[1];
      case GraspFeature::kC3: return fused->c[2];
      case GraspFeature::kC4: return fused->c[3];
      default: return pyr.f[2];
    }
  }

  /// Dense grasp head: 20 class logits + 4 regression channels per cell.
  GraspHeadOut grasp_head(Tape& tape, NodeP feat) const {
    NodeP x = relu(tape, (*grasp_in_)(tape, feat));
    x = relu(tape, (*grasp_mid_)(tape, x));
    NodeP both = (*grasp_out_)(tape, x);
    return {slice_channels(tape, both, 0, kGraspClasses),
            slice_channels(tape, both, kGraspClasses, kGraspClasses + 4)};
  }

 private:
  NetConfig cfg_;
  std::deque<Param> params_;
  std::vector<Conv> backbone_;
  std::unique_ptr<Conv> seg_in_, seg_mid_, seg_out_;
  std::unique_ptr<Conv> grasp_in_, grasp_mid_, grasp_out_;
};

// ---------------------------------------------------------------------------
// Decoding and scene prediction

/// Full-resolution label map: nearest upsample of the per-pixel argmax.
inline std::vector<int> seg_label_map(const Tensor& logits, int h, int w) {
  std::vector<int> out(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sy = std::min(y / 2, logits.h - 1), sx = std::min(x / 2, logits.w - 1);
      int best = 0;
      float best_v = logits.at(0, sy, sx);
      for (int c = 1; c < logits.c; ++c)
        if (logits.at(c, sy, sx) > best_v) {
          best_v = logits.at(c, sy, sx);
          best = c;
        }
      out[static_cast<size_t>(y) * w + x] = best;
    }
  return out;
}

/// Decodes one grid cell: center = (cell + 0.5 + offset) * stride, sizes =
/// exp(log size) * stride, angle = bin center of the best angle class,
/// confidence = (1 - P(non-graspable)) * max over angle classes of P.
inline std::pair<GraspRect, double> decode_cell(const Tensor& cls, const Tensor& reg,
                                                int i, int j, int stride) {
  std::vector<double> prob(kGraspClasses);
  double mx = cls.at(0, i, j);
  for (int c = 1; c < kGraspClasses; ++c) mx = std::max(mx, double(cls.at(c, i, j)));
  double sum = 0.0;
  for (int c = 0; c < kGraspClasses; ++c) {
    prob[c] = std::exp(cls.at(c, i, j) - mx);
    sum += prob[c];
  }
  for (double& p : prob) p /= sum;
  int best = 1;
  for (int c = 2; c < kGraspClasses; ++c)
    if (prob[c] > prob[best]) best = c;
  GraspRect g;
  g.x = (j + 0.5 + reg.at(0, i, j)) * stride;
  g.y = (i + 0.5 + reg.at(1, i, j)) * stride;
  g.theta = wrap_angle_deg(decode_angle(AngleClass(best)));
  g.w = std::exp(reg.at(2, i, j)) * stride;
  g.h = std::exp(reg.at(3, i, j)) * stride;
  const double confidence = (1.0 - prob[0]) * prob[best];
  return {g, confidence};
}

struct PredictOptions {
  /// Teacher forcing: skip segmentation and filter with these masks.
  const std::vector<std::pair<int, BitMask>>* gt_masks = nullptr;
};

/// Runs the whole pipeline on one image and keeps the single
/// highest-confidence grasp per object instance.
inline std::vector<Detection> predict_scene(const GraspNet& net, const Tensor& input,
                                            const PredictOptions& opt = {}) {
  Tape tape(false);
  NodeP x = leaf(tape, input);
  const FeaturePyramid pyr = net.backbone(tape, x);
  std::optional<FusedMaps> fused;
  if (net.config().feature_fusion) fused = net.fuse(tape, pyr);

  std::vector<std::pair<int, BitMask>> instances;
  if (opt.gt_masks) {
    instances = *opt.gt_masks;
  } else {
    NodeP seg = net.segment(tape, net.config().feature_fusion ? fused->c[0] : pyr.f[0]);
    const std::vector<int> labels = seg_label_map(seg->val, input.h, input.w);
    instances = split_objects(labels, input.h, input.w, net.config().min_component_area);
  }

  const NodeP base = net.grasp_input(pyr, fused ? &*fused : nullptr);
  const int stride = grasp_stride(net.config().grasp_feature);

  // Without filtering the head output is object-independent; run it once.
  GraspHeadOut shared;
  if (!net.config().feature_filtering) shared = net.grasp_head(tape, base);

  std::vector<Detection> out;
  for (size_t k = 0; k < instances.size(); ++k) {
    const auto& [category, mask] = instances[k];
    GraspHeadOut head = shared;
    if (net.config().feature_filtering)
      head = net.grasp_head(tape, binarize_and_filter(tape, base, mask, stride));

    const std::shared_ptr<Tensor> cells = reduce_mask(mask, stride);
    Detection best;
    best.category_id = category;
    best.object_index = opt.gt_masks ? static_cast<int>(k) : -1;
    best.confidence = -1.0;
    for (int i = 0; i < head.cls->val.h; ++i)
      for (int j = 0; j < head.cls->val.w; ++j) {
        if (cells->at(0, i, j) == 0.0f) continue;  // grasp must belong to the object
        auto [rect, conf] = decode_cell(head.cls->val, head.reg->val, i, j, stride);
        if (conf > best.confidence) {
          best.confidence = conf;
          best.grasp = rect;
        }
      }
    if (best.confidence >= 0.0) out.push_back(std::move(best));
  }
  return out;
}

/// Pixel input in [0, 1]; composes RGD when requested and depth is present.
inline Tensor to_input_tensor(const SceneSample& s, const std::string& input_mode) {
  ImageU8 img = s.image;
  if (input_mode == "rgd" && s.channels != "rgd") {
    if (s.depth.empty())
      throw std::runtime_error("input_mode rgd requires a depth map for " + s.source_id);
    img = build_rgd(s.image, to_float(s.depth));
  }
  Tensor t(3, img.h, img.w);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        t.at(ch, y, x) = img.at(y, x, ch) / 255.0f;
  return t;
}

}  // namespace semgrasp
