#include "semgrasp/losses.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "semgrasp/network.hpp"
#include "semgrasp/rng.hpp"
#include "semgrasp/synth.hpp"

using namespace semgrasp;

namespace {

// Minimal scene: one rectangular object whose mask covers most of the frame.
SceneSample tiny_scene(int size, const std::vector<GraspRect>& grasps) {
  SceneSample s;
  s.image = ImageU8(size, size, 3, 128);
  ObjectAnnotation o;
  o.category_id = 0;
  o.category_name = "bar";
  o.mask = {{2, 2}, {size - 2.0, 2}, {size - 2.0, size - 2.0}, {2, size - 2.0}};
  o.grasps = grasps;
  s.objects.push_back(o);
  return s;
}

template <class S>
std::vector<S> random_vec(Rng& rng, size_t n, double scale = 1.0) {
  std::vector<S> v(n);
  for (S& x : v) x = static_cast<S>(rng.normal() * scale);
  return v;
}

}  // namespace

TEST(AssignTargets, CenterCellArithmetic) {
  const SceneSample s = tiny_scene(64, {{36.0, 28.0, 10.0, 16.0, 8.0}});
  const CellTargets t = assign_targets(s, 8, 8, 8);
  const int idx = t.cell_index(3, 4);
  EXPECT_EQ(t.cls[idx], encode_angle(10.0).c);
  EXPECT_DOUBLE_EQ(t.reg[idx][0], 0.0);
  EXPECT_DOUBLE_EQ(t.reg[idx][1], 0.0);
  EXPECT_DOUBLE_EQ(t.reg[idx][2], std::log(2.0));  // w / stride = 2
  EXPECT_DOUBLE_EQ(t.reg[idx][3], std::log(1.0));
  EXPECT_EQ(t.object_id[idx], 0);
  EXPECT_EQ(t.num_objects, 1);
  int positives = 0;
  for (int c : t.cls) positives += c != 0;
  EXPECT_EQ(positives, 1);
}

TEST(AssignTargets, EmptySceneAllNegative) {
  SceneSample s;
  s.image = ImageU8(64, 64, 3);
  const CellTargets t = assign_targets(s, 8, 8, 8);
  EXPECT_EQ(t.num_objects, 0);
  for (int c : t.cls) ASSERT_EQ(c, 0);
}

TEST(AssignTargets, GraspOutsideItsMaskIsSkipped) {
  SceneSample s = tiny_scene(64, {{36.0, 28.0, 10.0, 16.0, 8.0}});
  s.objects[0].mask = {{2, 2}, {10, 2}, {10, 10}, {2, 10}};  // center not inside
  const CellTargets t = assign_targets(s, 8, 8, 8);
  EXPECT_EQ(t.skipped_outside_mask, 1);
  EXPECT_EQ(t.num_objects, 0);
  for (int c : t.cls) ASSERT_EQ(c, 0);
}

TEST(AssignTargets, FirstGraspWinsSharedCell) {
  const SceneSample s =
      tiny_scene(64, {{36.0, 28.0, 10.0, 16.0, 8.0}, {37.0, 29.0, -40.0, 12.0, 6.0}});
  const CellTargets t = assign_targets(s, 8, 8, 8);
  const int idx = t.cell_index(3, 4);
  EXPECT_EQ(t.cls[idx], encode_angle(10.0).c);
}

// assign_targets -> decode_cell reproduces the grasp: exact angle class,
// fields to 1e-4 (the acceptance suite runs the 500-grasp version).
TEST(AssignTargets, DecodeRoundTrip) {
  Rng rng(301);
  for (int trial = 0; trial < 60; ++trial) {
    GraspRect g;
    g.x = rng.uniform(8.0, 56.0);
    g.y = rng.uniform(8.0, 56.0);
    g.theta = rng.uniform(-90.0, 90.0);
    g.w = rng.uniform(4.0, 40.0);
    g.h = rng.uniform(4.0, 40.0);
    const SceneSample s = tiny_scene(64, {g});
    const CellTargets t = assign_targets(s, 8, 8, 8);

    int pos = -1;
    for (size_t i = 0; i < t.cls.size(); ++i)
      if (t.cls[i] != 0) pos = static_cast<int>(i);
    ASSERT_GE(pos, 0);
    ASSERT_EQ(t.cls[pos], encode_angle(g.theta).c);

    Tensor cls(kGraspClasses, 8, 8), reg(4, 8, 8);
    const int i = pos / 8, j = pos % 8;
    cls.at(t.cls[pos], i, j) = 20.0f;  // argmax = target class
    for (int m = 0; m < 4; ++m) reg.at(m, i, j) = static_cast<float>(t.reg[pos][m]);
    const auto [dec, conf] = decode_cell(cls, reg, i, j, 8);
    ASSERT_NEAR(dec.x, g.x, 1e-4);
    ASSERT_NEAR(dec.y, g.y, 1e-4);
    ASSERT_NEAR(dec.w, g.w, 1e-4);
    ASSERT_NEAR(dec.h, g.h, 1e-4);
    const int expect_class = t.cls[pos] == 19 ? 1 : t.cls[pos];  // 19 wraps to 1
    ASSERT_EQ(encode_angle(dec.theta).c, expect_class);
  }
}

TEST(SegLoss, PerfectPredictionIsZero) {
  const int classes = 4, npx = 9;
  std::vector<int> labels(npx);
  std::vector<double> logits(classes * npx, 0.0);
  for (int p = 0; p < npx; ++p) {
    labels[p] = p % classes;
    logits[labels[p] * npx + p] = 60.0;
  }
  EXPECT_NEAR((seg_loss<double>(logits.data(), classes, npx, labels.data()).value), 0.0, 1e-12);
}

TEST(SegLoss, UniformLogitsGiveLogN) {
  const int classes = 4, npx = 25;
  const std::vector<double> logits(classes * npx, 0.7);
  const std::vector<int> labels(npx, 2);
  EXPECT_NEAR((seg_loss<double>(logits.data(), classes, npx, labels.data()).value),
              std::log(4.0), 1e-12);
}

TEST(SegLoss, RejectsBadLabels) {
  const std::vector<double> logits(4 * 1, 0.0);
  const std::vector<int> bad{7};
  EXPECT_THROW((seg_loss<double>(logits.data(), 4, 1, bad.data())), std::invalid_argument);
}

TEST(SegLoss, GradientMatchesFiniteDifferences) {
  Rng rng(42);
  const int classes = 4, npx = 25;
  std::vector<int> labels(npx);
  for (int& l : labels) l = rng.uniform_int(0, classes - 1);

  const auto f64 = [&](const std::vector<double>& x) {
    return seg_loss<double>(x.data(), classes, npx, labels.data()).value;
  };
  const std::vector<double> x64 = random_vec<double>(rng, classes * npx);
  const auto analytic64 = seg_loss<double>(x64.data(), classes, npx, labels.data()).grad;
  EXPECT_LE(oracle::rel_error(analytic64, oracle::fd_gradient(x64, f64, 1e-3)), 1e-5);

  const auto f32 = [&](const std::vector<float>& x) {
    return seg_loss<float>(x.data(), classes, npx, labels.data()).value;
  };
  std::vector<float> x32(x64.begin(), x64.end());
  const auto analytic32 = seg_loss<float>(x32.data(), classes, npx, labels.data()).grad;
  EXPECT_LE(oracle::rel_error(analytic32, oracle::fd_gradient(x32, f32, 1e-3f)), 1e-2);
}

TEST(SmoothL1, PiecewiseValues) {
  EXPECT_DOUBLE_EQ(smooth_l1(0.0), 0.0);
  EXPECT_DOUBLE_EQ(smooth_l1(0.5), 0.125);
  EXPECT_DOUBLE_EQ(smooth_l1(2.0), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1(-2.0), 1.5);
  // continuous and once differentiable at the knee
  EXPECT_DOUBLE_EQ(smooth_l1(1.0), 0.5);
  EXPECT_DOUBLE_EQ(smooth_l1_grad(1.0), 1.0);
  EXPECT_DOUBLE_EQ(smooth_l1_grad(-0.25), -0.25);
}

namespace {

CellTargets one_cell_targets(double residual_free_target = 0.0) {
  CellTargets t;
  t.gh = t.gw = 2;
  t.stride = 8;
  t.cls.assign(4, 0);
  t.reg.assign(4, {});
  t.object_id.assign(4, -1);
  t.cls[1] = 5;
  t.reg[1] = {residual_free_target, residual_free_target, residual_free_target,
              residual_free_target};
  t.object_id[1] = 0;
  t.num_objects = 1;
  return t;
}

}  // namespace

TEST(RegLoss, PerfectPredictionIsZero) {
  const CellTargets t = one_cell_targets(0.25);
  std::vector<double> pred(4 * 4, 0.0);
  for (int m = 0; m < 4; ++m) pred[m * 4 + 1] = 0.25;
  EXPECT_DOUBLE_EQ((reg_loss<double>(pred.data(), t).value), 0.0);
}

TEST(RegLoss, FourResidualsOfHalf) {
  const CellTargets t = one_cell_targets(0.0);
  std::vector<double> pred(4 * 4, 0.0);
  for (int m = 0; m < 4; ++m) pred[m * 4 + 1] = 0.5;
  EXPECT_DOUBLE_EQ((reg_loss<double>(pred.data(), t).value), 0.5);  // 4 * 0.125
}

TEST(RegLoss, NegativeCellsDoNotContribute) {
  const CellTargets t = one_cell_targets(0.0);
  std::vector<double> a(4 * 4, 0.0), b(4 * 4, 0.0);
  for (int m = 0; m < 4; ++m) {
    a[m * 4 + 1] = 0.3;
    b[m * 4 + 1] = 0.3;
  }
  b[0] = 99.0;   // negative cell
  b[15] = -7.0;  // negative cell
  EXPECT_DOUBLE_EQ((reg_loss<double>(a.data(), t).value), (reg_loss<double>(b.data(), t).value));
}

// Within-object averaging: duplicating a positive cell with the same residual
// leaves the object's term unchanged.
TEST(RegLoss, ObjectAveragingInvariant) {
  CellTargets t = one_cell_targets(0.0);
  std::vector<double> pred(4 * 4, 0.0);
  for (int m = 0; m < 4; ++m) pred[m * 4 + 1] = 0.5;
  const double single = reg_loss<double>(pred.data(), t).value;

  t.cls[2] = 5;
  t.reg[2] = t.reg[1];
  t.object_id[2] = 0;
  for (int m = 0; m < 4; ++m) pred[m * 4 + 2] = 0.5;
  EXPECT_DOUBLE_EQ((reg_loss<double>(pred.data(), t).value), single);
}

TEST(RegLoss, AveragesOverObjects) {
  CellTargets t = one_cell_targets(0.0);
  t.cls[2] = 7;
  t.reg[2] = {0, 0, 0, 0};
  t.object_id[2] = 1;
  t.num_objects = 2;
  std::vector<double> pred(4 * 4, 0.0);
  for (int m = 0; m < 4; ++m) pred[m * 4 + 1] = 0.5;  // object 0: loss 0.5
  // object 1 perfect: loss 0 -> mean 0.25
  EXPECT_DOUBLE_EQ((reg_loss<double>(pred.data(), t).value), 0.25);
}

TEST(RegLoss, GradientMatchesFiniteDifferences) {
  Rng rng(43);
  CellTargets t = one_cell_targets(0.0);
  t.cls[2] = 3;
  t.reg[2] = {0.2, -0.1, 0.4, -0.3};
  t.object_id[2] = 1;
  t.num_objects = 2;

  const auto f = [&](const std::vector<double>& x) {
    return reg_loss<double>(x.data(), t).value;
  };
  const std::vector<double> x = random_vec<double>(rng, 16, 0.6);
  EXPECT_LE(oracle::rel_error(reg_loss<double>(x.data(), t).grad,
                              oracle::fd_gradient(x, f, 1e-3)),
            1e-5);

  const auto f32 = [&](const std::vector<float>& xf) {
    return reg_loss<float>(xf.data(), t).value;
  };
  std::vector<float> x32(x.begin(), x.end());
  EXPECT_LE(oracle::rel_error(reg_loss<float>(x32.data(), t).grad,
                              oracle::fd_gradient(x32, f32, 1e-3f)),
            1e-2);
}

TEST(ClsLoss, PerfectPredictionIsZero) {
  const CellTargets t = one_cell_targets();
  std::vector<double> pred(kGraspClasses * 4, 0.0);
  for (size_t p = 0; p < 4; ++p) pred[static_cast<size_t>(t.cls[p]) * 4 + p] = 60.0;
  EXPECT_NEAR((cls_loss<double>(pred.data(), t).value), 0.0, 1e-12);
}

TEST(ClsLoss, UniformLogitsSingleCell) {
  CellTargets t;
  t.gh = t.gw = 1;
  t.stride = 8;
  t.cls = {4};
  t.reg = {{}};
  t.object_id = {0};
  t.num_objects = 1;
  const std::vector<double> pred(kGraspClasses, 0.0);
  EXPECT_NEAR((cls_loss<double>(pred.data(), t).value), std::log(20.0), 1e-12);
}

TEST(ClsLoss, NegativeCellsDownWeighted) {
  const CellTargets t = one_cell_targets();  // 1 positive, 3 negative cells
  const std::vector<double> pred(kGraspClasses * 4, 0.0);  // uniform: CE = ln 20
  const double lambda = 0.1;
  // (CE_pos + lambda * sum CE_neg) / n_pos
  EXPECT_NEAR((cls_loss<double>(pred.data(), t, lambda).value),
              (1.0 + 3.0 * lambda) * std::log(20.0), 1e-12);
  // perfect positive, uniform negatives: only the down-weighted term remains
  std::vector<double> mixed(kGraspClasses * 4, 0.0);
  mixed[5 * 4 + 1] = 60.0;
  EXPECT_NEAR((cls_loss<double>(mixed.data(), t, lambda).value),
              3.0 * lambda * std::log(20.0), 1e-9);
}

// The positive-cell gradient scale must not shrink as the grid of negatives
// grows; that is the point of the separate normalization.
TEST(ClsLoss, PositiveGradientScaleIndependentOfGridSize) {
  const auto positive_grad_norm = [](int side) {
    CellTargets t;
    t.gh = t.gw = side;
    const size_t plane = static_cast<size_t>(side) * side;
    t.stride = 8;
    t.cls.assign(plane, 0);
    t.reg.assign(plane, {});
    t.object_id.assign(plane, -1);
    t.cls[0] = 7;
    t.object_id[0] = 0;
    t.num_objects = 1;
    const std::vector<double> pred(kGraspClasses * plane, 0.0);
    const auto g = cls_loss<double>(pred.data(), t).grad;
    double norm = 0.0;
    for (int c = 0; c < kGraspClasses; ++c) norm += g[c * plane] * g[c * plane];
    return std::sqrt(norm);
  };
  EXPECT_NEAR(positive_grad_norm(4), positive_grad_norm(40), 1e-12);
}

TEST(ClsLoss, GradientMatchesFiniteDifferences) {
  Rng rng(44);
  CellTargets t = one_cell_targets();
  t.cls[3] = 12;
  t.object_id[3] = 1;
  t.num_objects = 2;

  const auto f = [&](const std::vector<double>& x) {
    return cls_loss<double>(x.data(), t).value;
  };
  const std::vector<double> x = random_vec<double>(rng, kGraspClasses * 4);
  EXPECT_LE(oracle::rel_error(cls_loss<double>(x.data(), t).grad,
                              oracle::fd_gradient(x, f, 1e-3)),
            1e-5);

  const auto f32 = [&](const std::vector<float>& xf) {
    return cls_loss<float>(xf.data(), t).value;
  };
  std::vector<float> x32(x.begin(), x.end());
  EXPECT_LE(oracle::rel_error(cls_loss<float>(x32.data(), t).grad,
                              oracle::fd_gradient(x32, f32, 1e-3f)),
            1e-2);
}

TEST(TotalLoss, IdentityHolds) {
  const LossReport r = total_loss(1.0, 1.5, 0.5, 0.5);
  EXPECT_DOUBLE_EQ(r.grasp, 2.0);
  EXPECT_DOUBLE_EQ(r.total, 2.0);
  const LossReport z = total_loss(0.0, 0.0, 0.0, 0.5);
  EXPECT_DOUBLE_EQ(z.total, 0.0);
}

TEST(TotalLoss, RejectsBadInputs) {
  EXPECT_THROW(total_loss(1.0, 1.0, 1.0, 0.0), std::domain_error);
  EXPECT_THROW(total_loss(std::nan(""), 1.0, 1.0, 0.5), std::runtime_error);
  EXPECT_THROW(total_loss(1.0, -0.5, 1.0, 0.5), std::runtime_error);
}

// Multi-seed spot check of all three gradients, float32, the acceptance bound.
TEST(Gradients, MultiSeedFloat32) {
  for (std::uint64_t seed : {7ull, 8ull, 9ull}) {
    Rng rng(seed);
    const int classes = 4, gh = 6, gw = 6, npx = gh * gw;
    std::vector<int> labels(npx);
    for (int& l : labels) l = rng.uniform_int(0, classes - 1);
    const auto xs = random_vec<float>(rng, static_cast<size_t>(classes) * npx);
    const auto fs = [&](const std::vector<float>& x) {
      return seg_loss<float>(x.data(), classes, npx, labels.data()).value;
    };
    ASSERT_LE(oracle::rel_error(seg_loss<float>(xs.data(), classes, npx, labels.data()).grad,
                                oracle::fd_gradient(xs, fs, 1e-3f)),
              1e-2);
  }
}
