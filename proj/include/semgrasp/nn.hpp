// Reverse-mode building blocks for the model: conv2d (im2col + GEMM), relu,
// 2x2 max-pool, nearest upsample, channel concat/slice and mask gating, on an
// eagerly evaluated tape. Everything is single-threaded and deterministic;
// Eigen does the matrix products.
#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "semgrasp/rng.hpp"
#include "semgrasp/tensor.hpp"

namespace semgrasp {

struct Node {
  Tensor val;
  Tensor grad;                   // allocated only while recording
  std::function<void()> back;    // propagates this->grad to parents
};
using NodeP = std::shared_ptr<Node>;

/// Trainable array plus its gradient and Adam state.
struct Param {
  std::string name;
  Tensor w;
  Tensor g;
  Tensor m;  // first moment
  Tensor v;  // second moment

  explicit Param(std::string n, Tensor init) : name(std::move(n)), w(std::move(init)) {
    g = Tensor(w.c, w.h, w.w);
    m = Tensor(w.c, w.h, w.w);
    v = Tensor(w.c, w.h, w.w);
  }
  void zero_grad() { g.fill(0.0f); }
};

/// Eager tape: ops append nodes in execution order; backward() replays the
/// closures in reverse. With recording off no closures or grad buffers exist,
/// which is the inference mode.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  NodeP make(Tensor val) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    if (recording_) {
      n->grad = Tensor(n->val.c, n->val.h, n->val.w);
      order_.push_back(n);
    }
    return n;
  }

  void backward() {
    for (auto it = order_.rbegin(); it != order_.rend(); ++it)
      if ((*it)->back) (*it)->back();
  }

 private:
  bool recording_;
  std::vector<NodeP> order_;
};

inline NodeP leaf(Tape& tape, Tensor val) { return tape.make(std::move(val)); }

namespace nnd {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

// col layout: (ic * k * k) rows by (h * w) columns, zero padding k/2.
inline void im2col(const Tensor& x, int k, std::vector<float>& col) {
  const int pad = k / 2, h = x.h, w = x.w;
  col.assign(static_cast<size_t>(x.c) * k * k * h * w, 0.0f);
  size_t r = 0;
  for (int ic = 0; ic < x.c; ++ic)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++r) {
        float* dst = col.data() + r * h * w;
        const int dy = ky - pad, dx = kx - pad;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = y0; y < y1; ++y) {
          const float* src = &x.v[(static_cast<size_t>(ic) * h + y + dy) * w + x0 + dx];
          std::copy(src, src + (x1 - x0), dst + static_cast<size_t>(y) * w + x0);
        }
      }
}

inline void col2im_add(const std::vector<float>& col, int c, int h, int w, int k, Tensor& dx) {
  const int pad = k / 2;
  size_t r = 0;
  for (int ic = 0; ic < c; ++ic)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++r) {
        const float* src = col.data() + r * h * w;
        const int dy = ky - pad, dx_ = kx - pad;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        const int x0 = std::max(0, -dx_), x1 = std::min(w, w - dx_);
        for (int y = y0; y < y1; ++y) {
          float* dst = &dx.v[(static_cast<size_t>(ic) * h + y + dy) * w + x0 + dx_];
          const float* s = src + static_cast<size_t>(y) * w + x0;
          for (int x = 0; x < x1 - x0; ++x) dst[x] += s[x];
        }
      }
}

}  // namespace nnd

/// Same-padding stride-1 convolution. W is (oc, ic, k, k) flattened into a
/// Tensor of shape (oc, ic*k, k); b is (oc, 1, 1).
inline NodeP conv2d(Tape& tape, NodeP x, Param& W, Param& b, int k) {
  const int oc = W.w.c, ick2 = W.w.h * W.w.w;
  const int h = x->val.h, w = x->val.w, hw = h * w;
  if (ick2 != x->val.c * k * k)
    throw std::invalid_argument("conv2d: weight/input channel mismatch");

  auto col = std::make_shared<std::vector<float>>();
  nnd::im2col(x->val, k, *col);

  Tensor out(oc, h, w);
  {
    nnd::CMapRM Wm(W.w.v.data(), oc, ick2);
    nnd::CMapRM Cm(col->data(), ick2, hw);
    nnd::MapRM Ym(out.v.data(), oc, hw);
    Ym.noalias() = Wm * Cm;
    for (int o = 0; o < oc; ++o) Ym.row(o).array() += b.w.v[o];
  }
  NodeP y = tape.make(std::move(out));
  if (tape.recording()) {
    Node* yp = y.get();
    Param* Wp = &W;
    Param* bp = &b;
    const int ic = x->val.c;
    y->back = [yp, x, Wp, bp, col, oc, ick2, hw, h, w, k, ic] {
      nnd::CMapRM dY(yp->grad.v.data(), oc, hw);
      nnd::CMapRM Cm(col->data(), ick2, hw);
      nnd::MapRM dW(Wp->g.v.data(), oc, ick2);
      dW.noalias() += dY * Cm.transpose();
      // sequential sum: Eigen's vectorized redux splits by pointer alignment,
      // which would make reruns heap-layout-dependent
      for (int o = 0; o < oc; ++o) {
        const float* row = yp->grad.v.data() + static_cast<size_t>(o) * hw;
        float acc = 0.0f;
        for (int i = 0; i < hw; ++i) acc += row[i];
        bp->g.v[o] += acc;
      }
      std::vector<float> dcol(static_cast<size_t>(ick2) * hw);
      nnd::CMapRM Wm(Wp->w.v.data(), oc, ick2);
      nnd::MapRM dC(dcol.data(), ick2, hw);
      dC.noalias() = Wm.transpose() * dY;
      nnd::col2im_add(dcol, ic, h, w, k, x->grad);
    };
  }
  return y;
}

inline NodeP add_scalar(Tape& tape, NodeP x, float c) {
  Tensor out = x->val;
  for (float& v : out.v) v += c;
  NodeP y = tape.make(std::move(out));
  if (tape.recording()) {
    Node* yp = y.get();
    y->back = [yp, x] {
      for (size_t i = 0; i < x->grad.v.size(); ++i) x->grad.v[i] += yp->grad.v[i];
    };
  }
  return y;
}

inline NodeP relu(Tape& tape, NodeP x) {
  Tensor out = x->val;
  for (float& v : out.v) v = v > 0.0f ? v : 0.0f;
  NodeP y = tape.make(std::move(out));
  if (tape.recording()) {
    Node* yp = y.get();
    y->back = [yp, x] {
      for (size_t i = 0; i < x->grad.v.size(); ++i)
        if (x->val.v[i] > 0.0f) x->grad.v[i] += yp->grad.v[i];
    };
  }
  return y;
}

/// 2x2 max-pool, stride 2; ties break to the first element scanned.
inline NodeP maxpool2(Tape& tape, NodeP x) {
  const int c = x->val.c, h = x->val.h / 2, w = x->val.w / 2;
  if (x->val.h % 2 || x->val.w % 2)
    throw std::invalid_argument("maxpool2: odd spatial size");
  Tensor out(c, h, w);
  auto argmax = std::make_shared<std::vector<int>>(out.size());
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        float best = -std::numeric_limits<float>::infinity();
        int best_i = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int sy = 2 * y + dy, sx = 2 * xx + dx;
            const int idx = (ch * x->val.h + sy) * x->val.w + sx;
            if (x->val.v[idx] > best) {
              best = x->val.v[idx];
              best_i = idx;
            }
          }
        const size_t oi = (static_cast<size_t>(ch) * h + y) * w + xx;
        out.v[oi] = best;
        (*argmax)[oi] = best_i;
      }
  NodeP y = tape.make(std::move(out));
  if (tape.recording()) {
    Node* yp = y.get();
    y->back = [yp, x, argmax] {
      for (size_t i = 0; i < yp->grad.v.size(); ++i)
        x->grad.v[(*argmax)[i]] += yp->grad.v[i];
    };
  }
  return y;
}

/// Nearest-neighbor x2 upsample.
inline NodeP upsample2(Tape& tape, NodeP x) {
  const int c = x->val.c, h = x->val.h, w = x->val.w;
  Tensor out(c, 2 * h, 2 * w);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        out.at(ch, y, xx) = x->val.at(ch, y / 2, xx / 2);
  NodeP y = tape.make(std::move(out));
  if (tape.recording()) {
    Node* yp = y.get();
    y->back = [yp, x, c, h, w] {
      for (int ch = 0; ch < c; ++ch)
        for (int y2 = 0; y2 < 2 * h; ++y2)
          for (int x2 = 0; x2 < 2 * w; ++x2)
            x->grad.at(ch, y2 / 2, x2 / 2) += yp->grad.at(ch, y2, x2);
    };
  }
  return y;
}

inline NodeP concat(Tape& tape, NodeP a, NodeP b) {
  if (a->val.h != b->val.h || a->val.w != b->val.w)
    throw std::invalid_argument("concat: spatial mismatch");
  Tensor out(a->val.c + b->val.c, a->val.h, a->val.w);
  std::copy(a->val.v.begin(), a->val.v.end(), out.v.begin());
  std::copy(b->val.v.begin(), b->val.v.end(), out.v.begin() + a->val.v.size());
  NodeP y = tape.make(std::move(out));
  if (tape.recording()) {
    Node* yp = y.get();
    y->back = [yp, a, b] {
      for (size_t i = 0; i < a->grad.v.size(); ++i) a->grad.v[i] += yp->grad.v[i];
      const size_t off = a->grad.v.size();
      for (size_t i = 0; i < b->grad.v.size(); ++i) b->grad.v[i] += yp->grad.v[off + i];
    };
  }
  return y;
}

inline NodeP slice_channels(Tape& tape, NodeP x, int from, int to) {
  Tensor out(to - from, x->val.h, x->val.w);
  const size_t plane = static_cast<size_t>(x->val.h) * x->val.w;
  std::copy(x->val.v.begin() + from * plane, x->val.v.begin() + to * plane, out.v.begin());
  NodeP y = tape.make(std::move(out));
  if (tape.recording()) {
    Node* yp = y.get();
    y->back = [yp, x, from, plane] {
      for (size_t i = 0; i < yp->grad.v.size(); ++i)
        x->grad.v[from * plane + i] += yp->grad.v[i];
    };
  }
  return y;
}

/// Hadamard gate: every channel multiplied by a single-channel {0,1} mask.
inline NodeP mul_mask(Tape& tape, NodeP x, std::shared_ptr<Tensor> mask) {
  if (mask->h != x->val.h || mask->w != x->val.w || mask->c != 1)
    throw std::invalid_argument("mul_mask: mask shape mismatch");
  Tensor out = x->val;
  const size_t plane = static_cast<size_t>(out.h) * out.w;
  for (int ch = 0; ch < out.c; ++ch)
    for (size_t i = 0; i < plane; ++i) out.v[ch * plane + i] *= mask->v[i];
  NodeP y = tape.make(std::move(out));
  if (tape.recording()) {
    Node* yp = y.get();
    y->back = [yp, x, mask, plane] {
      for (int ch = 0; ch < x->grad.c; ++ch)
        for (size_t i = 0; i < plane; ++i)
          x->grad.v[ch * plane + i] += yp->grad.v[ch * plane + i] * mask->v[i];
    };
  }
  return y;
}

// ---------------------------------------------------------------------------
// Layers and optimizer

/// Convolution layer owning its weight/bias parameters.
class Conv {
 public:
  Conv(std::deque<Param>& store, const std::string& name, int ic, int oc, int k, Rng& rng)
      : k_(k) {
    Tensor w(oc, ic * k, k);
    const double std = std::sqrt(2.0 / (ic * k * k));
    for (float& x : w.v) x = static_cast<float>(rng.normal() * std);
    store.emplace_back(name + ".w", std::move(w));
    W_ = &store.back();
    store.emplace_back(name + ".b", Tensor(oc, 1, 1));
    b_ = &store.back();
  }

  NodeP operator()(Tape& tape, NodeP x) const { return conv2d(tape, x, *W_, *b_, k_); }

  Param& weight() { return *W_; }
  Param& bias() { return *b_; }

 private:
  int k_;
  Param* W_;
  Param* b_;
};

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;

  void step(const std::vector<Param*>& params, double lr) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (Param* p : params)
      for (size_t i = 0; i < p->w.v.size(); ++i) {
        const double g = p->g.v[i];
        p->m.v[i] = static_cast<float>(beta1 * p->m.v[i] + (1.0 - beta1) * g);
        p->v.v[i] = static_cast<float>(beta2 * p->v.v[i] + (1.0 - beta2) * g * g);
        const double mhat = p->m.v[i] / bc1;
        const double vhat = p->v.v[i] / bc2;
        p->w.v[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
      }
  }
};

}  // namespace semgrasp
