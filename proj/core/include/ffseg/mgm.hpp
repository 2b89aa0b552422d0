#pragma once

#include <cstdint>
#include <vector>

#include "ffseg/alignment.hpp"
#include "ffseg/mask_cache.hpp"
#include "ffseg/ply.hpp"

namespace ffseg {

struct PixelCoord {
  int x = 0;
  int y = 0;
  friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

struct Prompt {
  int view = 0;
  std::vector<PixelCoord> positives;
  std::vector<PixelCoord> negatives;

  /// Throws InputError when the view or a coordinate is out of range.
  void Validate(const ImageGrid& grid, int n_views) const;
};

/// Ascending, duplicate-free object ids.
class ObjectIdSet {
 public:
  ObjectIdSet() = default;
  explicit ObjectIdSet(std::vector<int> ids);

  void Insert(int id);
  void Erase(int id);
  bool Contains(int id) const;
  bool empty() const { return ids_.empty(); }
  std::size_t size() const { return ids_.size(); }
  const std::vector<int>& ids() const { return ids_; }
  auto begin() const { return ids_.begin(); }
  auto end() const { return ids_.end(); }

  friend bool operator==(const ObjectIdSet&, const ObjectIdSet&) = default;

 private:
  std::vector<int> ids_;
};

struct LiftedPoint {
  Vec3 position = Vec3::Zero();
  int view = 0;
  PixelCoord pixel;
  friend bool operator==(const LiftedPoint&, const LiftedPoint&) = default;
};

struct SegmentationResult {
  ObjectIdSet objects;
  std::vector<BinaryMask> masks;  // per view
  std::vector<LiftedPoint> points;
  bool empty = true;
  double elapsed_ms = 0.0;

  std::size_t MaskArea() const;
};

/// Each positive picks the smallest-area mask containing it in the prompt
/// view; objects whose mask contains a negative are then removed.
ObjectIdSet RetrieveObjects(const Prompt& prompt, const MaskCache& cache);

/// Per-view union of the selected objects' masks.
std::vector<BinaryMask> UnionMasks(const ObjectIdSet& objects, const MaskCache& cache);

/// Back-projects every set pixel through the aligned view transforms, in
/// ascending (view, row, column) order.
std::vector<LiftedPoint> LiftTo3d(const std::vector<BinaryMask>& masks, const std::vector<ViewTransform>& views);

SegmentationResult Segment(const Prompt& prompt, const MaskCache& cache, const AlignedScene& aligned);

/// Colours each lifted point from its source view image.
std::vector<ColoredPoint> ColorPoints(const std::vector<LiftedPoint>& points, const std::vector<RgbImage>& images);

}  // namespace ffseg
