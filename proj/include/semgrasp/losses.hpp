// Multi-task objective: dense target assignment, segmentation cross-entropy,
// smooth-L1 grasp regression, 20-way angle/graspability classification, and
// the weighted total. Each loss returns its value together with the analytic
// gradient w.r.t. the predictions; the templates exist so the gradient
// checker can run the same code in float and double.
#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "semgrasp/data.hpp"
#include "semgrasp/geometry.hpp"

namespace semgrasp {

constexpr int kGraspClasses = 20;  // class 0 = non-graspable, 1..19 = angle bins
constexpr double kLogClamp = 1e-12;

/// Per-cell supervision on the grasp grid. reg targets are defined only at
/// cells with cls >= 1; object_id records which object owns a positive cell.
struct CellTargets {
  int gh = 0;
  int gw = 0;
  int stride = 0;
  std::vector<int> cls;                      // gh*gw, values in [0, 19]
  std::vector<std::array<double, 4>> reg;    // dx, dy, log w~, log h~
  std::vector<int> object_id;                // -1 where negative
  int num_objects = 0;                       // objects owning >= 1 positive cell
  int skipped_outside_mask = 0;

  int cell_index(int i, int j) const { return i * gw + j; }

  /// View for one teacher-forced pass: only `object`'s cells stay positive.
  CellTargets select_object(int object) const {
    CellTargets out;
    out.gh = gh;
    out.gw = gw;
    out.stride = stride;
    out.cls.assign(cls.size(), 0);
    out.reg.assign(reg.size(), {});
    out.object_id.assign(object_id.size(), -1);
    for (size_t i = 0; i < cls.size(); ++i)
      if (object_id[i] == object) {
        out.cls[i] = cls[i];
        out.reg[i] = reg[i];
        out.object_id[i] = 0;
      }
    out.num_objects = 1;
    return out;
  }
};

/// Maps every ground-truth grasp to the grid cell containing its center:
/// cls = the grasp's angle class, reg = (center offset in cells, log sizes in
/// stride units). Grasps whose center pixel falls outside their object's mask
/// are skipped and counted. First grasp wins when two land in one cell.
inline CellTargets assign_targets(const SceneSample& sample, int stride, int gh, int gw) {
  CellTargets t;
  t.gh = gh;
  t.gw = gw;
  t.stride = stride;
  t.cls.assign(static_cast<size_t>(gh) * gw, 0);
  t.reg.assign(static_cast<size_t>(gh) * gw, {});
  t.object_id.assign(static_cast<size_t>(gh) * gw, -1);

  for (size_t k = 0; k < sample.objects.size(); ++k) {
    const ObjectAnnotation& obj = sample.objects[k];
    const BitMask mask = rasterize_mask(obj.mask, sample.image.h, sample.image.w);
    bool owns_cell = false;
    for (const GraspRect& g : obj.grasps) {
      require_valid(g);
      const int px = static_cast<int>(g.x);
      const int py = static_cast<int>(g.y);
      if (px < 0 || px >= mask.w || py < 0 || py >= mask.h || !mask.at(py, px)) {
        ++t.skipped_outside_mask;
        continue;
      }
      const int j = static_cast<int>(g.x / stride);
      const int i = static_cast<int>(g.y / stride);
      if (i < 0 || i >= gh || j < 0 || j >= gw) {
        ++t.skipped_outside_mask;
        continue;
      }
      const int idx = t.cell_index(i, j);
      if (t.cls[idx] != 0) continue;  // first annotation wins
      t.cls[idx] = encode_angle(g.theta).c;
      t.reg[idx] = {g.x / stride - (j + 0.5), g.y / stride - (i + 0.5),
                    std::log(g.w / stride), std::log(g.h / stride)};
      t.object_id[idx] = static_cast<int>(k);
      owns_cell = true;
    }
    if (owns_cell) ++t.num_objects;
  }
  return t;
}

template <class S>
struct LossGrad {
  S value = S(0);
  std::vector<S> grad;  // d value / d prediction, same layout as the input
};

namespace detail {

// Stable per-pixel cross-entropy. Writes softmax probabilities into `prob`
// (length n_classes) and returns -log(max(p_target, kLogClamp)).
template <class S>
S softmax_ce(const S* logits, size_t pix_stride, int n_classes, int target, S* prob) {
  S mx = logits[0];
  for (int c = 1; c < n_classes; ++c) mx = std::max(mx, logits[c * pix_stride]);
  S sum = S(0);
  for (int c = 0; c < n_classes; ++c) {
    prob[c] = std::exp(logits[c * pix_stride] - mx);
    sum += prob[c];
  }
  for (int c = 0; c < n_classes; ++c) prob[c] /= sum;
  return -std::log(std::max(prob[target], S(kLogClamp)));
}

}  // namespace detail

/// Mean over pixels of cross-entropy between the one-hot label map and the
/// softmax of the logits. Logits layout: (n_classes, npx) planes.
template <class S>
LossGrad<S> seg_loss(const S* logits, int n_classes, int npx, const int* labels) {
  LossGrad<S> out;
  out.grad.assign(static_cast<size_t>(n_classes) * npx, S(0));
  std::vector<S> prob(n_classes);
  const S inv_n = S(1) / S(npx);
  for (int p = 0; p < npx; ++p) {
    const int target = labels[p];
    if (target < 0 || target >= n_classes)
      throw std::invalid_argument("seg_loss: label out of range");
    out.value += detail::softmax_ce<S>(logits + p, npx, n_classes, target, prob.data());
    for (int c = 0; c < n_classes; ++c) {
      const S onehot = c == target ? S(1) : S(0);
      out.grad[static_cast<size_t>(c) * npx + p] = (prob[c] - onehot) * inv_n;
    }
  }
  out.value *= inv_n;
  return out;
}

/// smooth_L1(x): 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise.
template <class S>
S smooth_l1(S x) {
  const S a = std::abs(x);
  return a < S(1) ? S(0.5) * x * x : a - S(0.5);
}

template <class S>
S smooth_l1_grad(S x) {
  if (x > S(1)) return S(1);
  if (x < S(-1)) return S(-1);
  return x;
}

/// Eq-style grasp regression: per object, smooth-L1 summed over the four
/// components and averaged over that object's positive cells; the per-object
/// terms are then averaged over the objects. Zero when nothing is positive.
/// Prediction layout: 4 planes of gh*gw.
template <class S>
LossGrad<S> reg_loss(const S* pred, const CellTargets& t) {
  const size_t plane = static_cast<size_t>(t.gh) * t.gw;
  LossGrad<S> out;
  out.grad.assign(4 * plane, S(0));
  if (t.num_objects == 0) return out;

  std::vector<int> cells_per_object;
  for (size_t i = 0; i < t.object_id.size(); ++i) {
    const int o = t.object_id[i];
    if (o < 0) continue;
    if (o >= static_cast<int>(cells_per_object.size())) cells_per_object.resize(o + 1, 0);
    ++cells_per_object[o];
  }
  const S inv_objects = S(1) / S(t.num_objects);
  for (size_t i = 0; i < t.object_id.size(); ++i) {
    const int o = t.object_id[i];
    if (o < 0) continue;
    const S scale = inv_objects / S(cells_per_object[o]);
    for (int m = 0; m < 4; ++m) {
      const S r = pred[m * plane + i] - S(t.reg[i][m]);
      out.value += scale * smooth_l1(r);
      out.grad[m * plane + i] = scale * smooth_l1_grad(r);
    }
  }
  return out;
}

/// 20-way cross-entropy at every cell: positives against their angle class,
/// negatives against class 0. Positive and negative cells are averaged
/// separately and the negative mean is weighted by lambda_neg, so the
/// positive-cell gradient scale is independent of how dense the grid is.
template <class S>
LossGrad<S> cls_loss(const S* pred, const CellTargets& t, double lambda_neg = 0.1) {
  const size_t plane = static_cast<size_t>(t.gh) * t.gw;
  LossGrad<S> out;
  out.grad.assign(kGraspClasses * plane, S(0));
  std::vector<S> prob(kGraspClasses);

  size_t n_pos = 0;
  for (size_t p = 0; p < plane; ++p) n_pos += t.cls[p] >= 1;
  const size_t n_neg = plane - n_pos;
  const S pos_scale = S(1) / S(std::max<size_t>(n_pos, 1));
  const S neg_scale = S(lambda_neg) / S(std::max<size_t>(n_neg, 1));

  for (size_t p = 0; p < plane; ++p) {
    const int target = t.cls[p];
    const S scale = target >= 1 ? pos_scale : neg_scale;
    out.value += scale * detail::softmax_ce<S>(pred + p, plane, kGraspClasses, target,
                                               prob.data());
    for (int c = 0; c < kGraspClasses; ++c) {
      const S onehot = c == target ? S(1) : S(0);
      out.grad[c * plane + p] = scale * (prob[c] - onehot);
    }
  }
  return out;
}

/// Loss bookkeeping: grasp = reg + cls, total = seg + alpha * grasp.
struct LossReport {
  double seg = 0.0;
  double reg = 0.0;
  double cls = 0.0;
  double grasp = 0.0;
  double total = 0.0;
  double alpha = 0.5;
};

inline LossReport total_loss(double seg, double reg, double cls, double alpha = 0.5) {
  if (!(alpha > 0.0)) throw std::domain_error("total_loss: alpha must be > 0");
  if (!std::isfinite(seg) || !std::isfinite(reg) || !std::isfinite(cls))
    throw std::runtime_error("total_loss: non-finite loss term");
  if (seg < 0.0 || reg < 0.0 || cls < 0.0)
    throw std::runtime_error("total_loss: negative loss term");
  LossReport r;
  r.seg = seg;
  r.reg = reg;
  r.cls = cls;
  r.alpha = alpha;
  r.grasp = reg + cls;
  r.total = seg + alpha * r.grasp;
  return r;
}

}  // namespace semgrasp
