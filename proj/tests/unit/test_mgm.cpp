#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "ffseg/mgm.hpp"
#include "test_support.hpp"

namespace ffseg {
namespace {

const ImageGrid kGrid{12, 10};

BinaryMask Rect(int x0, int y0, int x1, int y1) {
  BinaryMask m(kGrid, 0);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) m(x, y) = 1;
  }
  return m;
}

AlignedScene FlatScene(int n_views, const ImageGrid& grid, double depth = 2.0) {
  AlignedScene s;
  for (int v = 0; v < n_views; ++v) s.views.push_back({{1, 1, 0, 0}, RigidPose::Identity(), DepthMap(grid, depth)});
  return s;
}

// Same rule spelled out over the raw (id, mask) list: the smallest-area mask
// containing a positive wins (ties by id), then any mask holding a negative
// is dropped.
std::set<int> OracleRetrieve(const std::vector<std::pair<int, BinaryMask>>& masks, const Prompt& p) {
  std::set<int> out;
  for (const PixelCoord& q : p.positives) {
    int best = -1;
    std::size_t best_area = 0;
    for (const auto& [id, m] : masks) {
      if (m(q.x, q.y) == 0) continue;
      const std::size_t area = Popcount(m);
      if (best < 0 || area < best_area || (area == best_area && id < best)) {
        best = id;
        best_area = area;
      }
    }
    if (best >= 0) out.insert(best);
  }
  for (const PixelCoord& q : p.negatives) {
    for (const auto& [id, m] : masks) {
      if (m(q.x, q.y) != 0) out.erase(id);
    }
  }
  return out;
}

TEST(RetrieveObjects, SingleMask) {
  const MaskCache cache = BuildMaskCache(kGrid, {{{4, Rect(0, 0, 3, 3)}, {9, Rect(6, 6, 9, 9)}}}, {});
  EXPECT_EQ(RetrieveObjects({0, {{7, 7}}, {}}, cache).ids(), std::vector<int>{9});
}

TEST(RetrieveObjects, NestedMasksPreferTheSmaller) {
  // Areas 40 inside 120.
  const MaskCache cache = BuildMaskCache(kGrid, {{{1, Rect(0, 0, 12, 10)}, {2, Rect(2, 2, 10, 7)}}}, {});
  ASSERT_EQ(Popcount(Rect(2, 2, 10, 7)), 40u);
  ASSERT_EQ(Popcount(Rect(0, 0, 12, 10)), 120u);
  EXPECT_EQ(RetrieveObjects({0, {{5, 4}}, {}}, cache).ids(), std::vector<int>{2});
  EXPECT_EQ(RetrieveObjects({0, {{0, 0}}, {}}, cache).ids(), std::vector<int>{1});
}

TEST(RetrieveObjects, NegativeRemovesSelectedObject) {
  const MaskCache cache = BuildMaskCache(kGrid, {{{2, Rect(0, 0, 4, 4)}, {5, Rect(6, 0, 12, 4)}}}, {});
  const Prompt p{0, {{1, 1}, {8, 2}}, {{10, 3}}};
  EXPECT_EQ(RetrieveObjects(p, cache).ids(), std::vector<int>{2});
}

TEST(RetrieveObjects, BackgroundPromptIsEmpty) {
  const MaskCache cache = BuildMaskCache(kGrid, {{{2, Rect(0, 0, 4, 4)}}}, {});
  EXPECT_TRUE(RetrieveObjects({0, {{11, 9}}, {}}, cache).empty());
}

TEST(RetrieveObjects, OutOfRangePromptIsInputError) {
  const MaskCache cache = BuildMaskCache(kGrid, {{}}, {});
  EXPECT_THROW(RetrieveObjects({1, {{0, 0}}, {}}, cache), InputError);
  try {
    RetrieveObjects({0, {{0, 0}}, {{12, 0}}}, cache);
    FAIL();
  } catch (const InputError& ex) {
    EXPECT_EQ(std::string(ex.what()).rfind("negatives[0]", 0), 0u);
  }
}

TEST(RetrieveObjects, MatchesBruteForceOracleOnRandomPrompts) {
  CounterRng rng(31, 1);
  int nonempty = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<int, BinaryMask>> masks;
    const int n = 1 + static_cast<int>(rng.Below(8));
    std::vector<int> ids(20);
    std::iota(ids.begin(), ids.end(), 0);
    for (int k = 0; k < n; ++k) {
      const int x0 = static_cast<int>(rng.Below(12));
      const int y0 = static_cast<int>(rng.Below(10));
      const int x1 = x0 + 1 + static_cast<int>(rng.Below(static_cast<std::uint64_t>(12 - x0)));
      const int y1 = y0 + 1 + static_cast<int>(rng.Below(static_cast<std::uint64_t>(10 - y0)));
      const std::size_t pick = static_cast<std::size_t>(rng.Below(ids.size()));
      masks.emplace_back(ids[pick], Rect(x0, y0, x1, y1));
      ids.erase(ids.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    const MaskCache cache = BuildMaskCache(kGrid, {masks}, {});
    Prompt p{0, {}, {}};
    for (std::uint64_t k = 0, np = 1 + rng.Below(4); k < np; ++k) {
      p.positives.push_back({static_cast<int>(rng.Below(12)), static_cast<int>(rng.Below(10))});
    }
    for (std::uint64_t k = 0, nn = rng.Below(3); k < nn; ++k) {
      p.negatives.push_back({static_cast<int>(rng.Below(12)), static_cast<int>(rng.Below(10))});
    }
    const std::set<int> expected = OracleRetrieve(masks, p);
    const ObjectIdSet got = RetrieveObjects(p, cache);
    EXPECT_EQ(std::vector<int>(expected.begin(), expected.end()), got.ids());
    if (!got.empty()) ++nonempty;

    // Monotonicity.
    Prompt more_pos = p;
    more_pos.positives.push_back({static_cast<int>(rng.Below(12)), static_cast<int>(rng.Below(10))});
    Prompt no_neg = p;
    no_neg.negatives.clear();
    const ObjectIdSet with_pos = RetrieveObjects(more_pos, cache);
    const ObjectIdSet without_neg = RetrieveObjects(no_neg, cache);
    for (int id : got) {
      EXPECT_TRUE(with_pos.Contains(id));
      EXPECT_TRUE(without_neg.Contains(id));
    }
  }
  EXPECT_GT(nonempty, 30);
}

TEST(UnionMasks, EmptySelection) {
  const MaskCache cache = BuildMaskCache(kGrid, {{{0, Rect(0, 0, 2, 2)}}, {}}, {});
  for (const BinaryMask& m : UnionMasks(ObjectIdSet{}, cache)) EXPECT_EQ(Popcount(m), 0u);
}

TEST(UnionMasks, ObjectVisibleInSomeViews) {
  std::vector<std::vector<std::pair<int, BinaryMask>>> per_view(5);
  for (int v : {0, 2, 3}) per_view[static_cast<std::size_t>(v)].emplace_back(7, Rect(v, 0, v + 3, 3));
  const MaskCache cache = BuildMaskCache(kGrid, per_view, {});
  const auto masks = UnionMasks(ObjectIdSet({7}), cache);
  for (int v = 0; v < 5; ++v) EXPECT_EQ(Popcount(masks[static_cast<std::size_t>(v)]) > 0, v == 0 || v == 2 || v == 3);
}

TEST(UnionMasks, OverlappingMasksMatchPixelOr) {
  CounterRng rng(5, 5);
  const BinaryMask a = testing::RandomMask(kGrid, 0.3, rng);
  const BinaryMask b = testing::RandomMask(kGrid, 0.3, rng);
  const MaskCache cache = BuildMaskCache(kGrid, {{{1, a}, {2, b}}}, {});
  const BinaryMask u = UnionMasks(ObjectIdSet({1, 2}), cache)[0];
  std::size_t expected = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(u[i], a[i] | b[i]);
    expected += (a[i] || b[i]) ? 1 : 0;
  }
  EXPECT_EQ(Popcount(u), expected);
}

TEST(LiftTo3d, Examples) {
  EXPECT_TRUE(LiftTo3d({BinaryMask(kGrid, 0)}, FlatScene(1, kGrid).views).empty());

  BinaryMask m(kGrid, 0);
  m(1, 1) = 1;
  const auto points = LiftTo3d({m}, FlatScene(1, kGrid, 2.0).views);
  ASSERT_EQ(points.size(), 1u);
  EXPECT_EQ(points[0].position, Vec3(2, 2, 2));
  EXPECT_EQ(points[0].view, 0);
  EXPECT_EQ(points[0].pixel, (PixelCoord{1, 1}));

  EXPECT_THROW(LiftTo3d({m, m}, FlatScene(1, kGrid).views), StructuralError);
}

TEST(LiftTo3d, GroundTruthMasksReproduceObjectSamples) {
  const GroundTruthScene gt = GenerateScene(testing::SmallSpec(32, 24, 3), 3);
  std::vector<ViewTransform> views;
  for (const GroundTruthView& v : gt.views) views.push_back(v.transform);
  for (std::size_t id = 0; id < gt.object_points.size(); ++id) {
    std::vector<BinaryMask> masks;
    for (const GroundTruthView& v : gt.views) masks.push_back(v.object_masks[id]);
    const auto points = LiftTo3d(masks, views);
    ASSERT_EQ(points.size(), gt.object_points[id].size());
    for (std::size_t k = 0; k < points.size(); ++k) {
      const ObjectSample& s = gt.object_points[id][k];
      EXPECT_EQ(points[k].view, s.view);
      EXPECT_EQ(points[k].pixel, (PixelCoord{s.x, s.y}));
      EXPECT_LT((points[k].position - s.position).norm(), 1e-9);
    }
  }
}

TEST(Segment, ConsistencyDeterminismAndEmptyFlag) {
  const GroundTruthScene gt = GenerateScene(testing::SmallSpec(32, 24, 4), 4);
  ObjectMasksPerView per_view;
  AlignedScene aligned;
  for (const GroundTruthView& v : gt.views) {
    per_view.emplace_back();
    for (std::size_t id = 0; id < v.object_masks.size(); ++id) {
      if (Popcount(v.object_masks[id]) > 0) per_view.back().emplace_back(static_cast<int>(id), v.object_masks[id]);
    }
    aligned.views.push_back(v.transform);
  }
  const MaskCache cache = BuildMaskCache(gt.grid(), per_view, {});
  const CachedMask& target = cache.view(1).entries.front();
  PixelCoord inside{};
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (target.mask(x, y)) inside = {x, y};
    }
  }
  const Prompt prompt{1, {inside}, {}};
  const SegmentationResult a = Segment(prompt, cache, aligned);
  const SegmentationResult b = Segment(prompt, cache, aligned);
  EXPECT_FALSE(a.empty);
  EXPECT_EQ(a.objects.ids(), std::vector<int>{target.object_id});
  EXPECT_EQ(a.points.size(), a.MaskArea());
  EXPECT_EQ(a.objects, b.objects);
  EXPECT_EQ(a.masks, b.masks);
  EXPECT_EQ(a.points, b.points);
  for (const LiftedPoint& p : a.points) EXPECT_EQ(a.masks[static_cast<std::size_t>(p.view)](p.pixel.x, p.pixel.y), 1);

  PixelCoord outside{0, 0};
  for (int y = 0; y < 24; ++y) {
    for (int x = 0; x < 32; ++x) {
      bool any = false;
      for (const CachedMask& e : cache.view(1).entries) any = any || e.mask(x, y);
      if (!any) outside = {x, y};
    }
  }
  const SegmentationResult empty = Segment({1, {outside}, {}}, cache, aligned);
  EXPECT_TRUE(empty.empty);
  EXPECT_TRUE(empty.points.empty());
  EXPECT_EQ(empty.MaskArea(), 0u);

  EXPECT_THROW(Segment({1, {}, {}}, cache, aligned), InputError);
  AlignedScene short_scene = aligned;
  short_scene.views.pop_back();
  EXPECT_THROW(Segment(prompt, cache, short_scene), StructuralError);
}

TEST(ColorPoints, LooksUpSourcePixels) {
  RgbImage img{{2, 2}, {0, 0, 0, 10, 20, 30, 0, 0, 0, 0, 0, 0}};
  const auto colored = ColorPoints({{Vec3(1, 2, 3), 0, {1, 0}}}, {img});
  ASSERT_EQ(colored.size(), 1u);
  EXPECT_EQ(colored[0].color, (std::array<std::uint8_t, 3>{10, 20, 30}));
  EXPECT_EQ(colored[0].position, Vec3(1, 2, 3));
}

TEST(ObjectIdSet, SortedAndUnique) {
  ObjectIdSet s({5, 1, 5, 3});
  EXPECT_EQ(s.ids(), (std::vector<int>{1, 3, 5}));
  s.Insert(2);
  s.Insert(3);
  s.Erase(5);
  s.Erase(42);
  EXPECT_EQ(s.ids(), (std::vector<int>{1, 2, 3}));
  EXPECT_TRUE(s.Contains(2));
  EXPECT_FALSE(s.Contains(5));
}

}  // namespace
}  // namespace ffseg
