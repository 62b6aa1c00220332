#include "semgrasp/data.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "semgrasp/rng.hpp"
#include "semgrasp/synth.hpp"

using namespace semgrasp;
namespace fsys = std::filesystem;

namespace {

fsys::path temp_dir(const std::string& tag) {
  const fsys::path p = fsys::temp_directory_path() / ("semgrasp_test_" + tag);
  fsys::remove_all(p);
  fsys::create_directories(p);
  return p;
}

}  // namespace

TEST(RasterizeMask, AxisAlignedSquareExact) {
  const std::vector<Vec2> sq{{10, 10}, {20, 10}, {20, 20}, {10, 20}};
  const BitMask m = rasterize_mask(sq, 30, 30);
  int count = 0;
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 30; ++x) {
      const bool expect = oracle::point_in_polygon_evenodd(sq, x + 0.5, y + 0.5);
      ASSERT_EQ(m.at(y, x) != 0, expect) << "(" << x << "," << y << ")";
      count += m.at(y, x);
    }
  EXPECT_EQ(count, 100);
}

TEST(RasterizeMask, EmptyPolygonAllZero) {
  const BitMask m = rasterize_mask({}, 8, 8);
  for (auto v : m.v) ASSERT_EQ(v, 0);
}

TEST(RasterizeMask, FullFramePolygonAllOne) {
  const std::vector<Vec2> full{{0, 0}, {16, 0}, {16, 12}, {0, 12}};
  const BitMask m = rasterize_mask(full, 12, 16);
  for (auto v : m.v) ASSERT_EQ(v, 1);
}

TEST(RasterizeMask, RandomConvexMatchesBruteForce) {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec2> pts;
    for (int i = 0; i < 12; ++i)
      pts.push_back({rng.uniform(2.0, 62.0), rng.uniform(2.0, 62.0)});
    const std::vector<Vec2> poly = convex_hull(pts);
    const BitMask m = rasterize_mask(poly, 64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        ASSERT_EQ(m.at(y, x) != 0,
                  oracle::point_in_polygon_evenodd(poly, x + 0.5, y + 0.5));
  }
}

TEST(BuildRgd, ConstantDepthGivesZeroChannel) {
  ImageU8 rgb(4, 4, 3, 100);
  ImageF32 depth(4, 4, 1, 7.5f);
  const ImageU8 out = build_rgd(rgb, depth);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      EXPECT_EQ(out.at(y, x, 0), 100);
      EXPECT_EQ(out.at(y, x, 1), 100);
      EXPECT_EQ(out.at(y, x, 2), 0);
    }
}

TEST(BuildRgd, LinearRampMapsToFullRange) {
  ImageU8 rgb(1, 256, 3, 10);
  ImageF32 depth(1, 256, 1);
  for (int x = 0; x < 256; ++x) depth.at(0, x) = static_cast<float>(x);
  const ImageU8 out = build_rgd(rgb, depth);
  for (int x = 0; x < 256; ++x) {
    EXPECT_EQ(out.at(0, x, 2), x);
    EXPECT_EQ(out.at(0, x, 0), 10);
    EXPECT_EQ(out.at(0, x, 1), 10);
  }
}

TEST(BuildRgd, RejectsMisalignedOrNonFinite) {
  ImageU8 rgb(4, 4, 3);
  EXPECT_THROW(build_rgd(rgb, ImageF32(3, 4, 1)), std::invalid_argument);
  ImageF32 bad(4, 4, 1, 1.0f);
  bad.at(1, 1) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(build_rgd(rgb, bad), std::invalid_argument);
}

TEST(SceneJson, RoundTripLossless) {
  const fsys::path dir = temp_dir("json_roundtrip");
  const SceneSample s = synth_scene(99, 3);
  save_scene_json(s, dir / "scene.json");
  const SceneSample r = load_scene_json(dir / "scene.json");

  EXPECT_EQ(r.channels, s.channels);
  EXPECT_TRUE(r.image == s.image);
  EXPECT_TRUE(r.depth == s.depth);
  ASSERT_EQ(r.objects.size(), s.objects.size());
  for (size_t i = 0; i < s.objects.size(); ++i) {
    const auto& a = s.objects[i];
    const auto& b = r.objects[i];
    EXPECT_EQ(a.category_id, b.category_id);
    EXPECT_EQ(a.category_name, b.category_name);
    ASSERT_EQ(a.mask.size(), b.mask.size());
    for (size_t k = 0; k < a.mask.size(); ++k) {
      ASSERT_NEAR(a.mask[k].x, b.mask[k].x, 1e-9);
      ASSERT_NEAR(a.mask[k].y, b.mask[k].y, 1e-9);
    }
    ASSERT_EQ(a.grasps.size(), b.grasps.size());
    for (size_t k = 0; k < a.grasps.size(); ++k) {
      ASSERT_NEAR(a.grasps[k].x, b.grasps[k].x, 1e-9);
      ASSERT_NEAR(a.grasps[k].y, b.grasps[k].y, 1e-9);
      ASSERT_NEAR(a.grasps[k].theta, b.grasps[k].theta, 1e-9);
      ASSERT_NEAR(a.grasps[k].w, b.grasps[k].w, 1e-9);
      ASSERT_NEAR(a.grasps[k].h, b.grasps[k].h, 1e-9);
    }
  }
}

TEST(SceneJson, MissingFieldNamesTheField) {
  const fsys::path dir = temp_dir("json_badfield");
  {
    std::ofstream f(dir / "bad.json");
    f << R"({"image": "x.png", "objects": []})";
  }
  try {
    load_scene_json(dir / "bad.json");
    FAIL() << "expected error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("channels"), std::string::npos);
  }
}

TEST(Manifest, RoundTripAndDenseIds) {
  const fsys::path dir = temp_dir("manifest");
  DatasetManifest m;
  m.split = "test";
  m.category_names = {"bar", "ellipse"};
  m.samples = {"a.json", "b.json"};
  save_manifest(m, dir / "manifest.json");
  const DatasetManifest r = load_manifest(dir / "manifest.json");
  EXPECT_EQ(r.split, "test");
  EXPECT_EQ(r.category_names, m.category_names);
  EXPECT_EQ(r.samples, m.samples);

  {
    std::ofstream f(dir / "manifest.json");
    f << R"({"root":".","split":"train","categories":[{"id":1,"name":"x"}],"samples":[]})";
  }
  EXPECT_THROW(load_manifest(dir / "manifest.json"), std::runtime_error);
}

TEST(Manifest, DisjointSplitGuard) {
  const fsys::path a = temp_dir("split_a");
  const fsys::path b = temp_dir("split_b");
  const SceneSample s = synth_scene(500, 1, {.size = 160});
  save_scene_json(s, a / "s.json");

  DatasetManifest ma;
  ma.split = "train";
  ma.category_names = synth_categories();
  ma.samples = {"s.json"};
  save_manifest(ma, a / "manifest.json");

  DatasetManifest mb = ma;
  mb.split = "test";
  mb.root = (fsys::relative(a, b)).string();  // points at the same file
  save_manifest(mb, b / "manifest.json");

  EXPECT_THROW(require_disjoint_splits(a, b), std::runtime_error);
  require_disjoint_splits(a, a);  // same dir: the overfit workflow, allowed

  mb.root = ".";
  save_scene_json(s, b / "s.json");
  save_manifest(mb, b / "manifest.json");
  require_disjoint_splits(a, b);  // distinct files: fine
}

TEST(Cornell, FixtureParsesToHandCount) {
  const fsys::path fixture = fsys::path(SEMGRASP_FIXTURE_DIR) / "cornell";
  ASSERT_TRUE(fsys::is_directory(fixture)) << fixture;
  const CornellParseResult r = parse_cornell(fixture);
  EXPECT_EQ(r.stats.images, 5);
  EXPECT_EQ(r.stats.grasps, 12);  // hand count: 48 annotation lines / 4
  EXPECT_EQ(r.stats.nan_rects_skipped, 0);
  EXPECT_EQ(r.stats.samples_skipped, 0);
  EXPECT_EQ(r.stats.mask_sidecars, 3);
  ASSERT_EQ(r.samples.size(), 5u);
  const int expected_counts[5] = {2, 3, 1, 4, 2};
  for (int i = 0; i < 5; ++i) {
    ASSERT_EQ(r.samples[i].objects.size(), 1u);
    EXPECT_EQ(r.samples[i].objects[0].grasps.size(),
              static_cast<size_t>(expected_counts[i]))
        << r.samples[i].source_id;
    for (const GraspRect& g : r.samples[i].objects[0].grasps) {
      EXPECT_TRUE(is_valid(g));
      EXPECT_GE(g.x, 0.0);
      EXPECT_LT(g.x, r.samples[i].image.w);
      EXPECT_GE(g.y, 0.0);
      EXPECT_LT(g.y, r.samples[i].image.h);
    }
  }
  // sidecar-less samples fall back to an approximate hull contour
  int approx = 0;
  for (const auto& s : r.samples) approx += s.objects[0].mask_approximate;
  EXPECT_EQ(approx, 2);
}

TEST(Cornell, AxisAlignedQuadExample) {
  const fsys::path dir = temp_dir("cornell_axis");
  {
    std::ofstream f(dir / "pcd9999cpos.txt");
    f << "0 0\n4 0\n4 2\n0 2\n";
  }
  const std::vector<GraspRect> rects = parse_cornell_rects(dir / "pcd9999cpos.txt");
  ASSERT_EQ(rects.size(), 1u);
  EXPECT_NEAR(rects[0].x, 2.0, 1e-12);
  EXPECT_NEAR(rects[0].y, 1.0, 1e-12);
  EXPECT_NEAR(rects[0].theta, 0.0, 1e-12);
  EXPECT_NEAR(rects[0].w, 4.0, 1e-12);
  EXPECT_NEAR(rects[0].h, 2.0, 1e-12);
}

TEST(Cornell, EightLinesGiveTwoRects) {
  const fsys::path dir = temp_dir("cornell_two");
  {
    std::ofstream f(dir / "pcd0008cpos.txt");
    f << "0 0\n4 0\n4 2\n0 2\n10 10\n14 10\n14 12\n10 12\n";
  }
  EXPECT_EQ(parse_cornell_rects(dir / "pcd0008cpos.txt").size(), 2u);
}

TEST(Cornell, NanRectSkippedWithCount) {
  const fsys::path dir = temp_dir("cornell_nan");
  {
    std::ofstream f(dir / "pcd0007cpos.txt");
    f << "0 0\n4 0\nNaN NaN\n0 2\n10 10\n14 10\n14 12\n10 12\n";
  }
  int nan_rects = 0;
  const auto rects = parse_cornell_rects(dir / "pcd0007cpos.txt", &nan_rects);
  EXPECT_EQ(rects.size(), 1u);
  EXPECT_EQ(nan_rects, 1);
}

TEST(Cornell, MalformedLineReportsFileAndLine) {
  const fsys::path dir = temp_dir("cornell_bad");
  {
    std::ofstream f(dir / "pcd0006cpos.txt");
    f << "0 0\n4 zzz\n4 2\n0 2\n";
  }
  try {
    parse_cornell_rects(dir / "pcd0006cpos.txt");
    FAIL() << "expected parse error";
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("pcd0006cpos.txt:2"), std::string::npos) << msg;
  }
}

TEST(Augment, IdentityOnCenteredFrame) {
  const SceneSample s = synth_scene(5, 2);
  ASSERT_EQ(s.image.h, 480);
  const SceneSample a = augment(s, Crop::kCenter, 0);
  EXPECT_TRUE(a.image == s.image);
  ASSERT_EQ(a.objects.size(), s.objects.size());
  for (size_t i = 0; i < s.objects.size(); ++i) {
    ASSERT_EQ(a.objects[i].grasps.size(), s.objects[i].grasps.size());
    for (size_t k = 0; k < s.objects[i].grasps.size(); ++k) {
      EXPECT_NEAR(a.objects[i].grasps[k].x, s.objects[i].grasps[k].x, 1e-9);
      EXPECT_NEAR(a.objects[i].grasps[k].y, s.objects[i].grasps[k].y, 1e-9);
      EXPECT_NEAR(a.objects[i].grasps[k].theta, s.objects[i].grasps[k].theta, 1e-9);
    }
  }
}

TEST(Augment, Rotation180IsPointSymmetry) {
  const SceneSample s = synth_scene(6, 2);
  const SceneSample a = augment(s, Crop::kCenter, 180);
  for (const auto& [orig, rot] : {std::pair{&s.objects[0], &a.objects[0]},
                                  std::pair{&s.objects[1], &a.objects[1]}}) {
    for (size_t k = 0; k < orig->grasps.size(); ++k) {
      EXPECT_NEAR(rot->grasps[k].x, 479.0 - orig->grasps[k].x, 1e-9);
      EXPECT_NEAR(rot->grasps[k].y, 479.0 - orig->grasps[k].y, 1e-9);
      EXPECT_NEAR(rot->grasps[k].theta, orig->grasps[k].theta, 1e-9);
    }
  }
  // pixels move the same way
  for (int y = 100; y < 110; ++y)
    for (int x = 200; x < 210; ++x)
      ASSERT_EQ(a.image.at(y, x, 0), s.image.at(479 - y, 479 - x, 0));
}

TEST(Augment, RejectsSmallImagesAndBadRotations) {
  SceneSample small;
  small.image = ImageU8(300, 640, 3);
  EXPECT_THROW(augment(small, Crop::kCenter, 0), std::domain_error);
  const SceneSample s = synth_scene(7, 1);
  EXPECT_THROW(augment(s, Crop::kCenter, 15), std::domain_error);
  EXPECT_THROW(augment(s, Crop::kCenter, 360), std::domain_error);
}

// The rigid motion preserves every pairwise geometric relation among grasps.
TEST(Augment, MatchRelationsPreserved) {
  const SceneSample s = synth_scene(8, 3);
  std::vector<GraspRect> before;
  for (const auto& o : s.objects)
    before.insert(before.end(), o.grasps.begin(), o.grasps.end());

  for (const int rot : {20, 120, 260}) {
    const SceneSample a = augment(s, Crop::kCenter, rot);
    std::vector<GraspRect> after;
    for (const auto& o : a.objects)
      after.insert(after.end(), o.grasps.begin(), o.grasps.end());
    if (after.size() != before.size()) continue;  // frame-exit drops
    for (size_t i = 0; i < before.size(); ++i)
      for (size_t j = 0; j < before.size(); ++j) {
        ASSERT_NEAR(jaccard(before[i], before[j]), jaccard(after[i], after[j]), 1e-6);
        ASSERT_NEAR(angle_distance(before[i].theta, before[j].theta),
                    angle_distance(after[i].theta, after[j].theta), 1e-6);
        ASSERT_EQ(is_match(before[i], before[j]), is_match(after[i], after[j]));
      }
  }
}

TEST(Augment, CentersStayInsideTransformedMasks) {
  const SceneSample s = synth_scene(9, 3);
  for (const Crop crop : {Crop::kCenter, Crop::kLeft, Crop::kRight})
    for (const int rot : {0, 40, 180, 300}) {
      const SceneSample a = augment(s, crop, rot);
      for (const auto& o : a.objects) {
        const BitMask m = rasterize_mask(o.mask, 480, 480);
        for (const GraspRect& g : o.grasps) {
          const int px = static_cast<int>(g.x);
          const int py = static_cast<int>(g.y);
          ASSERT_TRUE(m.at(py, px)) << "center left its mask at rot " << rot;
        }
      }
    }
}

TEST(Synth, DeterministicInSeed) {
  const SceneSample a = synth_scene(1234, 3);
  const SceneSample b = synth_scene(1234, 3);
  EXPECT_TRUE(a.image == b.image);
  EXPECT_TRUE(a.depth == b.depth);
  ASSERT_EQ(a.objects.size(), b.objects.size());
  for (size_t i = 0; i < a.objects.size(); ++i) {
    EXPECT_EQ(a.objects[i].category_id, b.objects[i].category_id);
    EXPECT_EQ(a.objects[i].grasps[0].x, b.objects[i].grasps[0].x);
    EXPECT_EQ(a.objects[i].grasps[0].theta, b.objects[i].grasps[0].theta);
  }
  const SceneSample c = synth_scene(1235, 3);
  EXPECT_FALSE(a.image == c.image);
}

TEST(Synth, SingleObjectSceneShape) {
  const SceneSample s = synth_scene(77, 1);
  ASSERT_EQ(s.objects.size(), 1u);
  EXPECT_GE(s.objects[0].grasps.size(), 1u);
  EXPECT_EQ(s.image.h, 480);
  EXPECT_EQ(s.image.w, 480);
  EXPECT_FALSE(s.depth.empty());
}

TEST(Synth, GraspsSelfMatchAndSitInsideMasks) {
  for (const std::uint64_t seed : {11ull, 12ull, 13ull}) {
    const SceneSample s = synth_scene(seed, 3);
    for (const auto& o : s.objects) {
      const BitMask m = rasterize_mask(o.mask, s.image.h, s.image.w);
      for (const GraspRect& g : o.grasps) {
        EXPECT_TRUE(is_match(g, g));
        EXPECT_TRUE(m.at(static_cast<int>(g.y), static_cast<int>(g.x)));
      }
    }
  }
}

TEST(Synth, LabelMapCoversExactlyTheMasks) {
  const SceneSample s = synth_scene(21, 2);
  const std::vector<int> labels = label_map(s);
  std::vector<BitMask> masks;
  for (const auto& o : s.objects)
    masks.push_back(rasterize_mask(o.mask, s.image.h, s.image.w));
  for (int y = 0; y < s.image.h; ++y)
    for (int x = 0; x < s.image.w; ++x) {
      int expect = 0;
      for (size_t i = 0; i < masks.size(); ++i)
        if (masks[i].at(y, x)) expect = s.objects[i].category_id + 1;
      ASSERT_EQ(labels[static_cast<size_t>(y) * s.image.w + x], expect);
    }
}

TEST(Synth, ClutterAddsUnlabeledShapes) {
  const SceneSample plain = synth_scene(31, 2);
  const SceneSample cluttered = synth_scene(31, 2, {.size = 480, .clutter = true});
  EXPECT_EQ(cluttered.objects.size(), 2u);
  EXPECT_FALSE(plain.image == cluttered.image);
}

TEST(Synth, RejectsBadArguments) {
  EXPECT_THROW(synth_scene(1, 0), std::domain_error);
  EXPECT_THROW(synth_scene(1, 6), std::domain_error);
  EXPECT_THROW(synth_scene(1, 2, {.size = 100}), std::domain_error);
  EXPECT_THROW(synth_scene(1, 2, {.size = 250}), std::domain_error);
}
