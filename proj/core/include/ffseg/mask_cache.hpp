#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "ffseg/scene_model.hpp"

namespace ffseg {

struct SoftenParams {
  double background_level = 0.2;  // beta_bg
  int blur_radius = 2;            // box half-width in pixels

  void Validate() const;
};

/// S = beta_bg + (1 - beta_bg) * boxblur(union, r), clamped to [0, 1]. The box
/// average only counts in-bounds pixels.
SoftMask SoftenMask(const BinaryMask& union_mask, const SoftenParams& params);

struct CachedMask {
  int object_id = 0;
  BinaryMask mask;
  std::size_t area = 0;

  friend bool operator==(const CachedMask&, const CachedMask&) = default;
};

struct ViewMaskCache {
  /// Sorted ascending by (area, object_id).
  std::vector<CachedMask> entries;
  SoftMask soft_mask;

  const CachedMask* Find(int object_id) const;
  friend bool operator==(const ViewMaskCache&, const ViewMaskCache&) = default;
};

class MaskCache {
 public:
  MaskCache() = default;
  MaskCache(ImageGrid grid, std::vector<ViewMaskCache> views);

  const ImageGrid& grid() const { return grid_; }
  int n_views() const { return static_cast<int>(views_.size()); }
  const ViewMaskCache& view(int v) const;
  const std::vector<ViewMaskCache>& views() const { return views_; }
  /// Ascending list of all object ids present in any view.
  std::vector<int> ObjectIds() const;

  /// Throws DataError when ordering, uniqueness or area invariants fail.
  void Validate() const;

  friend bool operator==(const MaskCache&, const MaskCache&) = default;

 private:
  ImageGrid grid_;
  std::vector<ViewMaskCache> views_;
};

/// Per view, the (object_id, mask) pairs to cache.
using ObjectMasksPerView = std::vector<std::vector<std::pair<int, BinaryMask>>>;

MaskCache BuildMaskCache(const ImageGrid& grid, const ObjectMasksPerView& masks,
                         const SoftenParams& params);

}  // namespace ffseg
